//! Enclosure regions in the complex plane.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::linalg::C64;
use crate::operator_lab::bands::{abs_pow, BandSpec, GapParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "kebab-case")]
pub enum Shape {
    /// `|Im λ| ≤ h |Re λ|^p`
    DoubleParabola { p: f64, h: f64 },
    /// Part of the double parabola with `sign · Re λ ≥ 0`.
    HalfParabola { sign: f64, p: f64, h: f64 },
    /// pδ-neighborhood of `[s, t]` inside the double parabola of height `b' + δ`.
    PDeltaNeighborhood { s: f64, t: f64, p: f64, delta: f64, b_prime: f64 },
    /// `|Re λ - r| ≤ δ |r|^p`
    VerticalStrip { r: f64, delta: f64, p: f64 },
    /// Cut between `Re λ = r_left` and `Re λ = r_right`, capped by the parabola arcs.
    CurvilinearTrapezoid { r_left: f64, r_right: f64, p: f64, h: f64 },
    Rectangle { x_min: f64, x_max: f64, y_min: f64, y_max: f64 },
    Circle { center_re: f64, center_im: f64, radius: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub shape: Shape,
    /// Boundary points count as inside.
    pub boundary_closed: bool,
}

impl From<Shape> for Region {
    fn from(shape: Shape) -> Self {
        Region { shape, boundary_closed: true }
    }
}

fn le(a: f64, b: f64, closed: bool) -> bool {
    if closed {
        a <= b
    } else {
        a < b
    }
}

impl Shape {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(LabError::InvalidParameter(format!("{msg} in {self:?}")));
        match *self {
            Shape::DoubleParabola { p, h } | Shape::HalfParabola { p, h, .. } => {
                if !(h > 0.0) || !(0.0..1.0).contains(&p) {
                    return bad("need h > 0 and p in [0, 1)");
                }
            }
            Shape::PDeltaNeighborhood { s, t, delta, b_prime, .. } => {
                if !(delta > 0.0) || s >= t || b_prime < 0.0 {
                    return bad("need δ > 0, s < t and b' >= 0");
                }
            }
            Shape::VerticalStrip { delta, .. } => {
                if !(delta > 0.0) {
                    return bad("need δ > 0");
                }
            }
            Shape::CurvilinearTrapezoid { r_left, r_right, h, .. } => {
                if !(h > 0.0) || r_left >= r_right {
                    return bad("need h > 0 and r_left < r_right");
                }
            }
            Shape::Rectangle { x_min, x_max, y_min, y_max } => {
                if x_min >= x_max || y_min >= y_max {
                    return bad("degenerate rectangle");
                }
            }
            Shape::Circle { radius, .. } => {
                if !(radius > 0.0) {
                    return bad("need a positive radius");
                }
            }
        }
        Ok(())
    }
}

/// Membership by the defining inequalities.
pub fn region_contains(region: &Region, lambda: C64) -> bool {
    let closed = region.boundary_closed;
    let (x, y) = (lambda.re, lambda.im);
    let in_parabola = |p: f64, h: f64| le(y.abs(), h * abs_pow(x, p), closed);
    match region.shape {
        Shape::DoubleParabola { p, h } => in_parabola(p, h),
        Shape::HalfParabola { sign, p, h } => le(0.0, sign * x, closed) && in_parabola(p, h),
        Shape::PDeltaNeighborhood { s, t, p, delta, b_prime } => {
            in_parabola(p, b_prime + delta)
                && le(s - delta * abs_pow(s, p), x, closed)
                && le(x, t + delta * abs_pow(t, p), closed)
        }
        Shape::VerticalStrip { r, delta, p } => le((x - r).abs(), delta * abs_pow(r, p), closed),
        Shape::CurvilinearTrapezoid { r_left, r_right, p, h } => {
            le(r_left, x, closed) && le(x, r_right, closed) && in_parabola(p, h)
        }
        Shape::Rectangle { x_min, x_max, y_min, y_max } => {
            le(x_min, x, closed) && le(x, x_max, closed) && le(y_min, y, closed) && le(y, y_max, closed)
        }
        Shape::Circle { center_re, center_im, radius } => {
            le((lambda - C64::new(center_re, center_im)).norm(), radius, closed)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Midline {
    pub gap: i64,
    pub r: f64,
    pub strip: Region,
    pub outer: bool,
}

/// Gap midpoints `r_k = (α_{2k} + α_{2k+1})/2` with their strips `Ω_k`.
pub fn gap_midlines(bands: &BandSpec, params: &GapParams) -> Vec<Midline> {
    bands
        .gaps()
        .into_iter()
        .map(|g| {
            let r = g.midpoint();
            Midline {
                gap: g.index,
                r,
                strip: Shape::VerticalStrip { r, delta: params.delta, p: params.p }.into(),
                outer: g.outer,
            }
        })
        .collect()
}
