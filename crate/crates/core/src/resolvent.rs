//! Resolvent norms, mid-gap line scans, enclosure reports and the summability
//! integrals along the contour pieces.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::linalg::{c, identity, matmul, min_singular_value, shifted, spectral_norm, CMatrix, CVector, C64};
use crate::operator_lab::bands::{abs_pow, GapParams};
use crate::operator_lab::ModelOperator;
use crate::quadrature::{quadrature_rules, QuadratureRule};
use crate::region::{region_contains, Region, Shape};

/// Geometric constants shared by the scans, cuts and contours.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub p: f64,
    pub b1: f64,
    /// Certified subordination constant used in place of the infimum `b'`.
    pub b_est: f64,
    /// Parabola height of the contours, `h > b_est`.
    pub h: f64,
    pub delta: f64,
    pub tol_asym: f64,
}

impl Geometry {
    pub fn gap_params(&self) -> GapParams {
        GapParams { p: self.p, b1: self.b1, b_prime: self.b_est, delta: self.delta }
    }

    pub fn validate(&self) -> Result<()> {
        self.gap_params().validate()?;
        if !(self.h > self.b_est) {
            return Err(LabError::InvalidParameter(format!(
                "parabola height h = {} must exceed b_est = {}",
                self.h, self.b_est
            )));
        }
        if !(self.tol_asym >= 0.0) {
            return Err(LabError::InvalidParameter("tol_asym must be nonnegative".into()));
        }
        Ok(())
    }

    /// Asymptotic line bound `b_est / b1 + tol_asym`.
    pub fn line_bound(&self) -> f64 {
        self.b_est / self.b1 + self.tol_asym
    }

    /// Half-height `h |x|^p` of the parabola at abscissa `x`.
    pub fn half_height(&self, x: f64) -> f64 {
        self.h * abs_pow(x, self.p)
    }
}

fn guard_floor(scale: f64) -> f64 {
    1e-14 * if scale > 0.0 { scale } else { 1.0 }
}

/// `‖(M - λ)^{-1}‖ = 1 / σ_min(M - λ)`.
pub fn resolvent_norm(m: &CMatrix, lambda: C64) -> Result<f64> {
    resolvent_norm_scaled(m, lambda, spectral_norm(m))
}

/// [`resolvent_norm`] with `‖M‖` supplied, for repeated evaluation.
pub fn resolvent_norm_scaled(m: &CMatrix, lambda: C64, m_norm: f64) -> Result<f64> {
    let smin = min_singular_value(&shifted(m, lambda));
    if smin < guard_floor(m_norm) {
        return Err(LabError::NearSpectrum { re: lambda.re, im: lambda.im, sigma_min: smin });
    }
    Ok(1.0 / smin)
}

/// `‖T(T - λ)^{-1}‖ = sup_t |t / (t - λ)|`, exact from the spectrum.
pub fn weighted_resolvent_norm(t: &ModelOperator, lambda: C64) -> Result<f64> {
    check_off_spectrum(t, lambda)?;
    Ok(t.eigenvalues
        .iter()
        .map(|&s| (c(s, 0.0) / (c(s, 0.0) - lambda)).norm())
        .fold(0.0, f64::max))
}

fn check_off_spectrum(t: &ModelOperator, lambda: C64) -> Result<()> {
    let d = t.distance_to_spectrum(lambda);
    if d < guard_floor(t.norm()) {
        return Err(LabError::NearSpectrum { re: lambda.re, im: lambda.im, sigma_min: d });
    }
    Ok(())
}

/// `S(λ) = B (T - λ)^{-1}`.
pub fn s_matrix(t: &ModelOperator, b: &CMatrix, lambda: C64) -> Result<CMatrix> {
    Ok(matmul(b, &t.resolvent(lambda)?))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SNorms {
    pub s: f64,
    pub weighted: f64,
}

/// Returns `‖S(λ)‖` and `‖T(T - λ)^{-1}‖`.
pub fn s_norm(t: &ModelOperator, b: &CMatrix, lambda: C64) -> Result<SNorms> {
    let weighted = weighted_resolvent_norm(t, lambda)?;
    let s = spectral_norm(&s_matrix(t, b, lambda)?);
    Ok(SNorms { s, weighted })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineSample {
    pub tau: f64,
    pub resolvent_t: f64,
    pub weighted: f64,
    pub s: f64,
    /// `‖(1 + S)^{-1}‖`
    pub m: f64,
    pub resolvent_a: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineScanProfile {
    pub gap: i64,
    pub r: f64,
    /// Scan ran on the surgered operator.
    pub surgered: bool,
    pub samples: Vec<LineSample>,
    pub max_s_norm: f64,
    pub max_m_norm: f64,
    /// `b_est / b1 + tol_asym`
    pub bound: f64,
    pub conforms: bool,
    /// `‖M‖ ≤ 1/(1 - ‖S‖)` wherever `‖S‖ < 1`.
    pub neumann_holds: bool,
    /// `‖M‖ ≤ 1/(1 - bound)` at every sample (only meaningful for `bound < 1`).
    pub m_within_bound: bool,
}

impl LineScanProfile {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "gap,r,tau,resolvent_t,weighted,s,m,resolvent_a")?;
        for s in &self.samples {
            writeln!(
                out,
                "{},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
                self.gap, self.r, s.tau, s.resolvent_t, s.weighted, s.s, s.m, s.resolvent_a
            )?;
        }
        Ok(())
    }
}

/// Samples the vertical segment `Re λ = r`, `|Im λ| ≤ h|r|^p`.
///
/// `a` is the dense `T + B`; it is passed separately because surgered scans
/// use the surgered `T` together with the original `A`.
pub fn line_scan(
    t: &ModelOperator,
    b: &CMatrix,
    a: &CMatrix,
    gap: i64,
    r: f64,
    geometry: &Geometry,
    samples: usize,
) -> Result<LineScanProfile> {
    if samples < 2 {
        return Err(LabError::InvalidParameter("line scan needs at least 2 samples".into()));
    }
    let rad = geometry.b1 * abs_pow(r, geometry.p);
    if t.count_in_open(r - rad, r + rad) > 0 {
        return Err(LabError::SpectrumInScanInterval { r, lo: r - rad, hi: r + rad });
    }
    let top = geometry.half_height(r);
    let n = t.dimension();
    let one = identity(n);
    let a_norm = spectral_norm(a);
    let pts: Vec<LineSample> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let tau = -top + 2.0 * top * i as f64 / (samples - 1) as f64;
            let lambda = c(r, tau);
            let s_mat = s_matrix(t, b, lambda)?;
            let m_smin = min_singular_value(&(&one + &s_mat));
            Ok(LineSample {
                tau,
                resolvent_t: 1.0 / t.distance_to_spectrum(lambda),
                weighted: weighted_resolvent_norm(t, lambda)?,
                s: spectral_norm(&s_mat),
                m: if m_smin > 0.0 { 1.0 / m_smin } else { f64::INFINITY },
                resolvent_a: resolvent_norm_scaled(a, lambda, a_norm)?,
            })
        })
        .collect::<Result<_>>()?;
    let max_s_norm = pts.iter().map(|s| s.s).fold(0.0, f64::max);
    let max_m_norm = pts.iter().map(|s| s.m).fold(0.0, f64::max);
    let bound = geometry.line_bound();
    let slack = 1.0 + 1e-10;
    let neumann_holds = pts.iter().all(|s| s.s >= 1.0 || s.m <= slack / (1.0 - s.s));
    let m_within_bound = bound < 1.0 && pts.iter().all(|s| s.m <= slack / (1.0 - bound));
    Ok(LineScanProfile {
        gap,
        r,
        surgered: false,
        samples: pts,
        max_s_norm,
        max_m_norm,
        bound,
        conforms: max_s_norm <= bound,
        neumann_holds,
        m_within_bound,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenMembership {
    pub re: f64,
    pub im: f64,
    pub in_rectangle: bool,
    /// Band whose pδ-neighborhood contains the eigenvalue.
    pub neighborhood: Option<i64>,
    pub in_parabola: bool,
    /// Within the Euclidean ε-neighborhood of some band, when ε is requested.
    pub in_epsilon: Option<bool>,
}

impl EigenMembership {
    pub fn violates(&self) -> bool {
        !(self.in_rectangle || self.in_parabola || self.neighborhood.is_some())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResolventSpot {
    pub re: f64,
    pub im: f64,
    pub s: f64,
    pub s_bound: f64,
    pub resolvent_a: f64,
    pub resolvent_a_bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnclosureReport {
    pub eigenvalues: Vec<EigenMembership>,
    pub violations: usize,
    pub epsilon: Option<f64>,
    pub epsilon_violations: Option<usize>,
    pub rectangle: Option<Shape>,
    pub h: f64,
    pub delta: f64,
    pub b_est: f64,
    /// Spot-check radius `R = 2·ρ(A)`.
    pub radius: f64,
    /// ε used in the spot-check constants.
    pub spot_epsilon: f64,
    pub slack: f64,
    pub spots: Vec<ResolventSpot>,
    pub s_spot_failures: usize,
    pub a_spot_failures: usize,
}

impl EnclosureReport {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "re,im,in_rectangle,neighborhood,in_parabola,in_epsilon")?;
        for e in &self.eigenvalues {
            writeln!(
                out,
                "{:.17e},{:.17e},{},{},{},{}",
                e.re,
                e.im,
                e.in_rectangle,
                e.neighborhood.map(|k| k.to_string()).unwrap_or_default(),
                e.in_parabola,
                e.in_epsilon.map(|b| b.to_string()).unwrap_or_default()
            )?;
        }
        Ok(())
    }
}

pub const SPOT_POINTS: usize = 200;
pub const SPOT_SLACK: f64 = 1.1;

/// Classifies every eigenvalue of `A` and spot-checks the far-field resolvent bounds.
pub fn verify_enclosure(
    t: &ModelOperator,
    b: &CMatrix,
    eigenvalues_a: &[C64],
    geometry: &Geometry,
    rectangle: Option<&Shape>,
    epsilon: Option<f64>,
) -> Result<EnclosureReport> {
    let (p, delta) = (geometry.p, geometry.delta);
    let parabola: Region = Shape::DoubleParabola { p, h: geometry.h }.into();
    let rect_region = rectangle.map(|s| Region::from(s.clone()));
    let bands = t.bands.bands();
    let hoods: Vec<(i64, Region)> = bands
        .iter()
        .map(|band| {
            let shape = Shape::PDeltaNeighborhood { s: band.lo, t: band.hi, p, delta, b_prime: geometry.b_est };
            (band.index, Region { shape, boundary_closed: false })
        })
        .collect();
    let members: Vec<EigenMembership> = eigenvalues_a
        .iter()
        .map(|&z| EigenMembership {
            re: z.re,
            im: z.im,
            in_rectangle: rect_region.as_ref().is_some_and(|r| region_contains(r, z)),
            neighborhood: hoods.iter().find(|(_, r)| region_contains(r, z)).map(|(k, _)| *k),
            in_parabola: region_contains(&parabola, z),
            in_epsilon: epsilon.map(|eps| {
                bands.iter().any(|band| {
                    let dx = (band.lo - z.re).max(z.re - band.hi).max(0.0);
                    dx.hypot(z.im) < eps
                })
            }),
        })
        .collect();
    let violations = members.iter().filter(|m| m.violates()).count();
    let epsilon_violations = epsilon.map(|_| members.iter().filter(|m| m.in_epsilon == Some(false)).count());

    let rho = eigenvalues_a.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let radius = 2.0 * rho.max(1.0);
    let spot_epsilon = 0.5 * (geometry.h - geometry.b_est);
    let a = t.matrix() + b;
    let a_norm = spectral_norm(&a);
    let s_bound = (geometry.b_est + spot_epsilon) / geometry.h;
    // ‖(T - λ)^{-1}‖ ≤ 1/|Im λ| and ‖(1 + S)^{-1}‖ ≤ h / (h - b_est - ε)
    let a_const = geometry.h / (geometry.h - geometry.b_est - spot_epsilon);
    let spots: Vec<ResolventSpot> = spot_grid(geometry, radius)
        .into_par_iter()
        .map(|z| {
            Ok(ResolventSpot {
                re: z.re,
                im: z.im,
                s: s_norm(t, b, z)?.s,
                s_bound,
                resolvent_a: resolvent_norm_scaled(&a, z, a_norm)?,
                resolvent_a_bound: a_const / z.im.abs(),
            })
        })
        .collect::<Result<_>>()?;
    let s_spot_failures = spots.iter().filter(|s| s.s > SPOT_SLACK * s.s_bound).count();
    let a_spot_failures = spots
        .iter()
        .filter(|s| s.resolvent_a > SPOT_SLACK * s.resolvent_a_bound)
        .count();
    Ok(EnclosureReport {
        eigenvalues: members,
        violations,
        epsilon,
        epsilon_violations,
        rectangle: rectangle.cloned(),
        h: geometry.h,
        delta,
        b_est: geometry.b_est,
        radius,
        spot_epsilon,
        slack: SPOT_SLACK,
        spots,
        s_spot_failures,
        a_spot_failures,
    })
}

/// 200 points with `|λ| ∈ [R, 10R]`: the two imaginary half-axes and the curves
/// `Im λ = ±2h|Re λ|^p`, `Re λ > 0`.
fn spot_grid(geometry: &Geometry, radius: f64) -> Vec<C64> {
    let per = SPOT_POINTS / 4;
    let moduli: Vec<f64> = (0..per)
        .map(|i| radius * 10f64.powf(i as f64 / (per - 1) as f64))
        .collect();
    let mut pts = Vec::with_capacity(SPOT_POINTS);
    pts.extend(moduli.iter().map(|&m| c(0.0, m)));
    pts.extend(moduli.iter().map(|&m| c(0.0, -m)));
    for sign in [1.0, -1.0] {
        for &m in &moduli {
            let x = offset_abscissa(2.0 * geometry.h, geometry.p, m);
            pts.push(c(x, sign * 2.0 * geometry.h * abs_pow(x, geometry.p)));
        }
    }
    pts
}

/// `x ≥ 0` with `|x + i k x^p| = modulus`.
fn offset_abscissa(k: f64, p: f64, modulus: f64) -> f64 {
    let f = |x: f64| x.hypot(k * abs_pow(x, p)) - modulus;
    let (mut lo, mut hi) = (0.0, modulus);
    if f(lo) >= 0.0 {
        // p = 0 and k ≥ modulus: the curve never reaches this modulus on Re λ > 0
        return 0.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Weighting of the test vector in the eigenbasis of `T`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TestVector {
    /// Equal weight on every eigenvector.
    Flat,
    /// Weight `(1 + |t|)^{-exponent}` on the eigenvector of `t`.
    PowerDecay { exponent: f64 },
}

impl TestVector {
    pub fn build(&self, t: &ModelOperator) -> CVector {
        let coeffs: Vec<C64> = t
            .eigenvalues
            .iter()
            .map(|&s| match *self {
                TestVector::Flat => C64::from(1.0),
                TestVector::PowerDecay { exponent } => C64::from((1.0 + s.abs()).powf(-exponent)),
            })
            .collect();
        let v = &t.eigenvectors * CVector::from_vec(coeffs);
        let norm = v.norm();
        v / C64::from(norm)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummabilityScan {
    pub nodes: usize,
    /// Cut abscissas of the segments `γ_j`, indexed from 1.
    pub segment_abscissas: Vec<f64>,
    pub segment_integrals: Vec<f64>,
    pub segment_partial_sums: Vec<f64>,
    /// Panels of `Γ_+ ∪ Γ_-` between consecutive cuts.
    pub panel_bounds: Vec<(f64, f64)>,
    pub curve_integrals: Vec<f64>,
    pub curve_partial_sums: Vec<f64>,
}

impl SummabilityScan {
    /// `I_j - I_{j-1}` style increments are the segment integrals themselves.
    pub fn increments(&self) -> &[f64] {
        &self.segment_integrals
    }
}

/// `‖(T - λ)^{-1}x‖ · ‖S(λ)x‖`
fn summand(t: &ModelOperator, b: &CMatrix, ux: &CVector, lambda: C64) -> f64 {
    // ux = U* x, so (T - λ)^{-1} x = U diag(1/(t - λ)) ux
    let scaled = CVector::from_iterator(
        ux.len(),
        t.eigenvalues
            .iter()
            .zip(ux.iter())
            .map(|(&s, &v)| v / (c(s, 0.0) - lambda)),
    );
    let rx = &t.eigenvectors * scaled;
    let sx = b * &rx;
    rx.norm() * sx.norm()
}

fn integrate_curve(f: impl Fn(f64) -> (C64, C64) + Sync, rule: &dyn QuadratureRule, nodes: usize, g: impl Fn(C64) -> f64 + Sync) -> f64 {
    let panel = rule.panel(nodes);
    let vals: Vec<f64> = panel
        .nodes
        .par_iter()
        .zip(panel.weights.par_iter())
        .map(|(&s, &w)| {
            let (z, dz) = f(s);
            w * dz.norm() * g(z)
        })
        .collect();
    vals.iter().sum()
}

/// Integrals of `‖(T-λ)^{-1}x‖‖S(λ)x‖|dλ|` along the vertical segments at the
/// given cuts (`γ_1, γ_2, …`) and along `Γ_±` between consecutive cuts.
pub fn series_summability_scan(
    t: &ModelOperator,
    b: &CMatrix,
    x: &CVector,
    geometry: &Geometry,
    cuts: &[f64],
    nodes: usize,
) -> Result<SummabilityScan> {
    if x.len() != t.dimension() {
        return Err(LabError::DimensionMismatch { expected: t.dimension(), found: x.len() });
    }
    let rule = quadrature_rules().get("gauss-legendre")?;
    let ux = t.eigenvectors.adjoint() * x;
    let f = |z: C64| summand(t, b, &ux, z);
    let mut segment_integrals = Vec::with_capacity(cuts.len());
    for &r in cuts {
        let top = geometry.half_height(r);
        let seg = |s: f64| (c(r, -top + 2.0 * top * s), c(0.0, 2.0 * top));
        segment_integrals.push(integrate_curve(seg, rule, nodes, f));
    }
    let mut panel_bounds = Vec::new();
    let mut curve_integrals = Vec::new();
    for w in cuts.windows(2) {
        let (x0, x1) = (w[0], w[1]);
        let mut total = 0.0;
        for sign in [1.0, -1.0] {
            let arc = |s: f64| {
                let x = x0 + (x1 - x0) * s;
                let slope = if geometry.p == 0.0 || x == 0.0 {
                    0.0
                } else {
                    geometry.h * geometry.p * x.abs().powf(geometry.p - 1.0) * x.signum()
                };
                (c(x, sign * geometry.half_height(x)), c(x1 - x0, sign * slope * (x1 - x0)))
            };
            total += integrate_curve(arc, rule, nodes, f);
        }
        panel_bounds.push((x0, x1));
        curve_integrals.push(total);
    }
    let partial = |v: &[f64]| {
        v.iter()
            .scan(0.0, |acc, x| {
                *acc += x;
                Some(*acc)
            })
            .collect::<Vec<_>>()
    };
    Ok(SummabilityScan {
        nodes,
        segment_abscissas: cuts.to_vec(),
        segment_partial_sums: partial(&segment_integrals),
        segment_integrals,
        panel_bounds,
        curve_partial_sums: partial(&curve_integrals),
        curve_integrals,
    })
}
