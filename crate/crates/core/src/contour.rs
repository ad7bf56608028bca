//! Discretized closed integration paths: `∮ f dλ ≈ Σ w_i f(λ_i)`.

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::linalg::{c, C64, I};
use crate::operator_lab::bands::abs_pow;
use crate::quadrature::quadrature_rules;
use crate::region::Shape;

pub const DEFAULT_RULE: &str = "gauss-legendre";

/// Smooth piece of a contour, parameterized over `t ∈ [0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Segment {
    Line { from: C64, to: C64 },
    /// `λ = x ± i h |x|^p` with `x` running linearly from `x_from` to `x_to`.
    ParabolaArc { x_from: f64, x_to: f64, p: f64, h: f64, upper: bool },
    /// Full counterclockwise circle.
    Circle { center: C64, radius: f64 },
}

impl Segment {
    pub fn point(&self, t: f64) -> C64 {
        match *self {
            Segment::Line { from, to } => from + (to - from) * t,
            Segment::ParabolaArc { x_from, x_to, p, h, upper } => {
                let x = x_from + (x_to - x_from) * t;
                let y = h * abs_pow(x, p);
                c(x, if upper { y } else { -y })
            }
            Segment::Circle { center, radius } => center + C64::from_polar(radius, 2.0 * PI * t),
        }
    }

    pub fn derivative(&self, t: f64) -> C64 {
        match *self {
            Segment::Line { from, to } => to - from,
            Segment::ParabolaArc { x_from, x_to, p, h, upper } => {
                let dx = x_to - x_from;
                let x = x_from + dx * t;
                let slope = if p == 0.0 || x == 0.0 {
                    0.0
                } else {
                    h * p * x.abs().powf(p - 1.0) * x.signum()
                };
                c(dx, dx * if upper { slope } else { -slope })
            }
            Segment::Circle { center: _, radius } => I * 2.0 * PI * C64::from_polar(radius, 2.0 * PI * t),
        }
    }

    fn is_periodic(&self) -> bool {
        matches!(self, Segment::Circle { .. })
    }

    fn is_degenerate(&self) -> bool {
        match *self {
            Segment::Line { from, to } => from == to,
            Segment::ParabolaArc { x_from, x_to, .. } => x_from == x_to,
            Segment::Circle { radius, .. } => radius == 0.0,
        }
    }

    pub fn reversed(&self) -> Segment {
        match *self {
            Segment::Line { from, to } => Segment::Line { from: to, to: from },
            Segment::ParabolaArc { x_from, x_to, p, h, upper } => Segment::ParabolaArc {
                x_from: x_to,
                x_to: x_from,
                p,
                h,
                upper,
            },
            // a clockwise circle is not representable; callers reverse weights instead
            Segment::Circle { .. } => self.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Contour {
    pub shape: Shape,
    pub rule: String,
    pub nodes_per_segment: usize,
    pub segments: Vec<Segment>,
    pub nodes: Vec<C64>,
    pub weights: Vec<C64>,
    /// +1 for counterclockwise, -1 after [`Contour::reversed`].
    pub orientation: i8,
}

/// Boundary pieces of a supported shape, counterclockwise.
pub fn boundary_segments(shape: &Shape) -> Result<Vec<Segment>> {
    shape.validate()?;
    let segs = match *shape {
        Shape::CurvilinearTrapezoid { r_left, r_right, p, h } => trapezoid_segments(r_left, r_right, p, h),
        Shape::PDeltaNeighborhood { s, t, p, delta, b_prime } => {
            let h = b_prime + delta;
            if !(h > 0.0) {
                return Err(LabError::InvalidParameter("pδ-neighborhood needs b' + δ > 0".into()));
            }
            trapezoid_segments(s - delta * abs_pow(s, p), t + delta * abs_pow(t, p), p, h)
        }
        Shape::Rectangle { x_min, x_max, y_min, y_max } => {
            let (a, b, cc, d) = (c(x_min, y_min), c(x_max, y_min), c(x_max, y_max), c(x_min, y_max));
            vec![
                Segment::Line { from: a, to: b },
                Segment::Line { from: b, to: cc },
                Segment::Line { from: cc, to: d },
                Segment::Line { from: d, to: a },
            ]
        }
        Shape::Circle { center_re, center_im, radius } => vec![Segment::Circle {
            center: c(center_re, center_im),
            radius,
        }],
        _ => {
            return Err(LabError::InvalidParameter(format!(
                "no closed bounded contour for {shape:?}"
            )))
        }
    };
    Ok(segs.into_iter().filter(|s| !s.is_degenerate()).collect())
}

fn trapezoid_segments(x_l: f64, x_r: f64, p: f64, h: f64) -> Vec<Segment> {
    let top = |x: f64| h * abs_pow(x, p);
    vec![
        Segment::ParabolaArc { x_from: x_l, x_to: x_r, p, h, upper: false },
        Segment::Line { from: c(x_r, -top(x_r)), to: c(x_r, top(x_r)) },
        Segment::ParabolaArc { x_from: x_r, x_to: x_l, p, h, upper: true },
        Segment::Line { from: c(x_l, top(x_l)), to: c(x_l, -top(x_l)) },
    ]
}

pub fn build_contour(shape: &Shape, nodes_per_segment: usize) -> Result<Contour> {
    build_contour_with(shape, nodes_per_segment, DEFAULT_RULE)
}

/// Closed, positively oriented discretization with `nodes_per_segment` nodes on
/// each smooth piece. Circles always use the periodic trapezoid rule.
pub fn build_contour_with(shape: &Shape, nodes_per_segment: usize, rule: &str) -> Result<Contour> {
    if nodes_per_segment < 8 {
        return Err(LabError::InvalidParameter("nodes_per_segment must be at least 8".into()));
    }
    let rule_impl = quadrature_rules().get(rule)?;
    let segments = boundary_segments(shape)?;
    if segments.is_empty() {
        return Err(LabError::InvalidParameter("contour has no nondegenerate segment".into()));
    }
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for seg in &segments {
        if seg.is_periodic() {
            let n = nodes_per_segment;
            for i in 0..n {
                let t = i as f64 / n as f64;
                nodes.push(seg.point(t));
                weights.push(seg.derivative(t) / n as f64);
            }
            continue;
        }
        let panel = rule_impl.panel(nodes_per_segment);
        for (&t, &w) in panel.nodes.iter().zip(&panel.weights) {
            nodes.push(seg.point(t));
            weights.push(seg.derivative(t) * w);
        }
    }
    Ok(Contour {
        shape: shape.clone(),
        rule: rule.to_string(),
        nodes_per_segment,
        segments,
        nodes,
        weights,
        orientation: 1,
    })
}

impl Contour {
    /// Same path rebuilt with a different node count.
    pub fn with_nodes(&self, nodes_per_segment: usize) -> Result<Contour> {
        let fresh = build_contour_with(&self.shape, nodes_per_segment, &self.rule)?;
        Ok(if self.orientation < 0 { fresh.reversed() } else { fresh })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn weight_sum(&self) -> C64 {
        self.weights.iter().sum()
    }

    /// Approximate arc length `Σ |w_i|`.
    pub fn length(&self) -> f64 {
        self.weights.iter().map(|w| w.norm()).sum()
    }

    /// `Σ w_i f(λ_i)`
    pub fn integrate(&self, f: impl Fn(C64) -> C64) -> C64 {
        self.nodes.iter().zip(&self.weights).map(|(&z, &w)| w * f(z)).sum()
    }

    /// Enclosed area via `∮ conj(λ) dλ = 2i · Area`; negative for clockwise paths.
    pub fn signed_area(&self) -> f64 {
        (self.integrate(|z| z.conj()) / (2.0 * I)).re
    }

    pub fn reversed(&self) -> Contour {
        Contour {
            segments: self.segments.iter().rev().map(Segment::reversed).collect(),
            nodes: self.nodes.iter().rev().copied().collect(),
            weights: self.weights.iter().rev().map(|w| -w).collect(),
            orientation: -self.orientation,
            ..self.clone()
        }
    }

    /// Dense closed polyline through the exact path (independent of quadrature nodes).
    pub fn polyline(&self, samples_per_segment: usize) -> Vec<C64> {
        let mut pts = Vec::new();
        for seg in &self.segments {
            for i in 0..samples_per_segment {
                pts.push(seg.point(i as f64 / samples_per_segment as f64));
            }
        }
        pts
    }

    /// Distance from `z` to the path, measured on a dense polyline.
    pub fn distance_to(&self, z: C64) -> f64 {
        self.distances(&[z])[0]
    }

    /// Distance from each of `points` to the path.
    pub fn distances(&self, points: &[C64]) -> Vec<f64> {
        let pts = self.polyline(512);
        let n = pts.len();
        points
            .iter()
            .map(|&z| {
                (0..n)
                    .map(|i| point_segment_distance(z, pts[i], pts[(i + 1) % n]))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect()
    }

    /// Winding number of the counterclockwise path around `z`.
    pub fn winding_number(&self, z: C64) -> i64 {
        let pts = self.polyline(512);
        let n = pts.len();
        let mut total = 0.0;
        for i in 0..n {
            let a = pts[i] - z;
            let b = pts[(i + 1) % n] - z;
            total += (b / a).arg();
        }
        (total / (2.0 * PI)).round() as i64
    }

    /// CSV rows `re,im,w_re,w_im`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "re,im,w_re,w_im")?;
        for (z, w) in self.nodes.iter().zip(&self.weights) {
            writeln!(out, "{:.17e},{:.17e},{:.17e},{:.17e}", z.re, z.im, w.re, w.im)?;
        }
        Ok(())
    }
}

fn point_segment_distance(z: C64, a: C64, b: C64) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_sqr();
    if len2 == 0.0 {
        return (z - a).norm();
    }
    let t = (((z - a) * ab.conj()).re / len2).clamp(0.0, 1.0);
    (z - (a + ab * t)).norm()
}
