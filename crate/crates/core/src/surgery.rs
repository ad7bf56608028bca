//! Artificial gaps: finite-rank displacement of in-gap eigenvalues, the
//! determinant `D(λ) = det(1 + L(λ))` and the search for clear cut lines.

use std::io::Write;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::linalg::{c, determinant, identity, inverse, matmul, spectral_norm, CMatrix, C64};
use crate::operator_lab::bands::abs_pow;
use crate::operator_lab::ModelOperator;
use crate::resolvent::Geometry;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MovedEigenvalue {
    pub index: usize,
    pub from: f64,
    pub to: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapSurgery {
    pub gap: i64,
    pub r: f64,
    pub r_minus: f64,
    pub r_plus: f64,
    pub moved: Vec<MovedEigenvalue>,
    pub k_norm: f64,
    #[serde(skip)]
    pub t_surgered: Option<ModelOperator>,
}

impl GapSurgery {
    pub fn rank(&self) -> usize {
        self.moved.len()
    }

    pub fn surgered(&self) -> &ModelOperator {
        self.t_surgered.as_ref().expect("surgery carries its operator")
    }

    /// Orthonormal columns `Φ` spanning the range of `K`.
    pub fn range(&self) -> CMatrix {
        let t = self.surgered();
        let n = t.dimension();
        let mut phi = CMatrix::zeros(n, self.rank());
        for (j, mv) in self.moved.iter().enumerate() {
            phi.set_column(j, &t.eigenvectors.column(mv.index));
        }
        phi
    }

    /// Displacements `d_j = μ_j - target_j`, so that `K = Φ diag(d) Φ*`.
    pub fn displacements(&self) -> Vec<f64> {
        self.moved.iter().map(|m| m.from - m.to).collect()
    }

    /// Dense `K`.
    pub fn k_matrix(&self) -> CMatrix {
        let phi = self.range();
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            self.rank(),
            self.displacements().into_iter().map(C64::from),
        ));
        &phi * d * phi.adjoint()
    }
}

/// Moves every eigenvalue of `T` inside `Θ = (r - b1|r|^p, r + b1|r|^p)` of gap
/// `gap` to the nearer endpoint (`r_plus` on a tie).
pub fn gap_displacement(t: &ModelOperator, gap: i64, b1: f64, p: f64, m: usize) -> Result<GapSurgery> {
    let g = t
        .bands
        .gap(gap)
        .ok_or_else(|| LabError::InvalidParameter(format!("no gap with index {gap}")))?;
    let r = g.midpoint();
    let rad = b1 * abs_pow(r, p);
    let (r_minus, r_plus) = (r - rad, r + rad);
    let moved: Vec<MovedEigenvalue> = t
        .eigenvalues
        .iter()
        .enumerate()
        .filter(|(_, &mu)| r_minus < mu && mu < r_plus)
        .map(|(index, &mu)| MovedEigenvalue { index, from: mu, to: if mu < r { r_minus } else { r_plus } })
        .collect();
    if moved.len() > m {
        return Err(LabError::GapMultiplicity { gap, count: moved.len(), m });
    }
    let mut ts = t.clone();
    for mv in &moved {
        ts.eigenvalues[mv.index] = mv.to;
    }
    let k_norm = moved.iter().map(|m| (m.from - m.to).abs()).fold(0.0, f64::max);
    Ok(GapSurgery { gap, r, r_minus, r_plus, moved, k_norm, t_surgered: Some(ts) })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub lines: usize,
    pub points_per_line: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { lines: 33, points_per_line: 65 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeterminantSample {
    pub re: f64,
    pub im: f64,
    pub abs_d: f64,
    pub l_norm: f64,
    pub inv_norm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeterminantProfile {
    pub gap: i64,
    pub r: f64,
    pub strip_half_width: f64,
    pub rank: usize,
    pub abscissas: Vec<f64>,
    /// `lines[i][j]`: point `j` on the line at `abscissas[i]`.
    pub lines: Vec<Vec<DeterminantSample>>,
    /// Worst relative gap between compressed and full determinants on the audit points.
    pub audit_error: f64,
    pub corner_h: f64,
    pub corner_l_norm: f64,
    pub corner_abs_d: f64,
}

impl DeterminantProfile {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "re,im,abs_d,l_norm,inv_norm")?;
        for s in self.lines.iter().flatten() {
            writeln!(out, "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}", s.re, s.im, s.abs_d, s.l_norm, s.inv_norm)?;
        }
        Ok(())
    }
}

struct Evaluator<'a> {
    surgery: &'a GapSurgery,
    ts_b: CMatrix,
    a: CMatrix,
    phi: CMatrix,
    d: Vec<C64>,
    k: CMatrix,
    scale: f64,
}

struct PointValue {
    det: C64,
    l_norm: f64,
    inv_norm: f64,
    full_det: Option<C64>,
}

impl<'a> Evaluator<'a> {
    fn new(surgery: &'a GapSurgery, b: &CMatrix) -> Self {
        let ts_b = surgery.surgered().matrix() + b;
        let k = surgery.k_matrix();
        let a = &ts_b + &k;
        let scale = spectral_norm(&ts_b).max(1.0);
        Evaluator {
            surgery,
            phi: surgery.range(),
            d: surgery.displacements().into_iter().map(C64::from).collect(),
            ts_b,
            a,
            k,
            scale,
        }
    }

    fn solve(&self, m: &CMatrix, z: C64) -> Result<CMatrix> {
        let shifted = crate::linalg::shifted(m, z);
        let inv = inverse(&shifted).filter(|x| x.iter().all(|v| v.re.is_finite() && v.im.is_finite()));
        match inv {
            Some(x) if x.norm() * self.scale < 1e14 => Ok(x),
            _ => Err(LabError::NearSpectrum { re: z.re, im: z.im, sigma_min: 0.0 }),
        }
    }

    fn eval(&self, z: C64, audit: bool) -> Result<PointValue> {
        let n = self.ts_b.nrows();
        let r = self.surgery.rank();
        if r == 0 {
            return Ok(PointValue { det: C64::from(1.0), l_norm: 0.0, inv_norm: 1.0, full_det: audit.then_some(C64::from(1.0)) });
        }
        // points on the spectrum of A or of T_surgered + B disqualify their line
        let Ok(res) = self.solve(&self.ts_b, z) else {
            return Ok(PointValue { det: C64::from(f64::INFINITY), l_norm: f64::INFINITY, inv_norm: f64::INFINITY, full_det: None });
        };
        // D diag(d) Φ* R Φ, an r×r compression of L = K R
        let mut dphi_r = self.phi.adjoint() * &res;
        for (i, di) in self.d.iter().enumerate() {
            dphi_r.row_mut(i).iter_mut().for_each(|v| *v *= di);
        }
        let small = identity(r) + &dphi_r * &self.phi;
        let det = determinant(&small);
        let l_norm = spectral_norm(&dphi_r);
        // (1 + L)^{-1} = I - K (A - λ)^{-1}
        let inv_norm = match self.solve(&self.a, z) {
            Ok(res_a) => spectral_norm(&(identity(n) - matmul(&self.k, &res_a))),
            Err(_) => f64::INFINITY,
        };
        let full_det = audit.then(|| {
            let l = matmul(&self.k, &res);
            determinant(&(identity(n) + l))
        });
        Ok(PointValue { det, l_norm, inv_norm, full_det })
    }
}

/// Samples `|D|`, `‖L‖` and `‖(1+L)^{-1}‖` on vertical lines across the strip
/// `|Re λ - r| < δ|r|^p`, each line running between the parabola arcs.
pub fn determinant_profile(
    surgery: &GapSurgery,
    b: &CMatrix,
    geometry: &Geometry,
    grid: GridSpec,
) -> Result<DeterminantProfile> {
    if grid.lines < 1 || grid.points_per_line < 2 {
        return Err(LabError::InvalidParameter("determinant grid too small".into()));
    }
    let ev = Evaluator::new(surgery, b);
    let r = surgery.r;
    let half = geometry.delta * abs_pow(r, geometry.p);
    let step = 2.0 * half / grid.lines as f64;
    let abscissas: Vec<f64> = (0..grid.lines).map(|i| r - half + (i as f64 + 0.5) * step).collect();
    let points: Vec<(usize, usize, C64)> = abscissas
        .iter()
        .enumerate()
        .flat_map(|(i, &x)| {
            let top = geometry.half_height(x);
            (0..grid.points_per_line).map(move |j| {
                let tau = -top + 2.0 * top * j as f64 / (grid.points_per_line - 1) as f64;
                (i, j, c(x, tau))
            })
        })
        .collect();
    let total = points.len();
    let audit_stride = (total / 10).max(1);
    let values: Vec<(PointValue, C64)> = points
        .par_iter()
        .enumerate()
        .map(|(idx, &(_, _, z))| Ok((ev.eval(z, idx % audit_stride == 0)?, z)))
        .collect::<Result<_>>()?;
    let mut audit_error = 0.0f64;
    let mut lines = vec![Vec::with_capacity(grid.points_per_line); grid.lines];
    for ((i, _, _), (v, z)) in points.iter().zip(values) {
        if let Some(full) = v.full_det {
            audit_error = audit_error.max((full - v.det).norm() / full.norm().max(f64::MIN_POSITIVE));
        }
        lines[*i].push(DeterminantSample { re: z.re, im: z.im, abs_d: v.det.norm(), l_norm: v.l_norm, inv_norm: v.inv_norm });
    }

    // raise the corner height until ‖L‖ ≤ 1/2 at r + i h r^p
    let mut corner_h = geometry.h;
    let mut corner = ev.eval(c(r, corner_h * abs_pow(r, geometry.p)), false)?;
    for _ in 0..60 {
        if corner.l_norm <= 0.5 {
            break;
        }
        corner_h *= 1.5;
        corner = ev.eval(c(r, corner_h * abs_pow(r, geometry.p)), false)?;
    }
    Ok(DeterminantProfile {
        gap: surgery.gap,
        r,
        strip_half_width: half,
        rank: surgery.rank(),
        abscissas,
        lines,
        audit_error,
        corner_h,
        corner_l_norm: corner.l_norm,
        corner_abs_d: corner.det.norm(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClearLine {
    pub gap: i64,
    pub r_prime: f64,
    pub min_abs_d: f64,
    pub max_inv_norm: f64,
    pub max_l_norm: f64,
    pub threshold: f64,
    /// `max ‖B(A - λ)^{-1}‖` along the chosen segment.
    pub c1: f64,
}

/// Default acceptance threshold `2^{-m} / 4`.
pub fn default_threshold(m: usize) -> f64 {
    0.25 * 0.5f64.powi(m as i32)
}

/// Picks the line maximizing `min |D|`; ties go to the smallest abscissa.
pub fn find_clear_line(
    profile: &DeterminantProfile,
    surgery: &GapSurgery,
    b: &CMatrix,
    geometry: &Geometry,
    threshold: f64,
) -> Result<ClearLine> {
    let m = surgery.rank();
    let stats: Vec<(f64, f64, f64, f64)> = profile
        .abscissas
        .iter()
        .zip(&profile.lines)
        .map(|(&x, line)| {
            let min_d = line.iter().map(|s| s.abs_d).fold(f64::INFINITY, f64::min);
            let max_inv = line.iter().map(|s| s.inv_norm).fold(0.0, f64::max);
            let max_l = line.iter().map(|s| s.l_norm).fold(0.0, f64::max);
            (x, min_d, max_inv, max_l)
        })
        .collect();
    let acceptable = |&(_, min_d, max_inv, max_l): &(f64, f64, f64, f64)| {
        min_d >= threshold && (threshold == 0.0 || max_inv <= (1.0 + max_l).powi(m as i32) / threshold)
    };
    let chosen = if m == 0 {
        // D ≡ 1: keep the midline
        Some((profile.r, 1.0, 1.0, 0.0))
    } else {
        let mut best: Option<(f64, f64, f64, f64)> = None;
        for s in stats.iter().filter(|s| acceptable(s)) {
            if best.is_none_or(|b| s.1 > b.1) {
                best = Some(*s);
            }
        }
        best
    };
    let Some((x, min_d, max_inv, max_l)) = chosen else {
        let best = stats.iter().map(|s| s.1).fold(0.0, f64::max);
        return Err(LabError::NoClearLine { gap: surgery.gap, best });
    };
    let a = surgery.surgered().matrix() + b + surgery.k_matrix();
    let top = geometry.half_height(x);
    let n_pts = profile.lines.first().map_or(65, |l| l.len()).max(2);
    let c1 = (0..n_pts)
        .into_par_iter()
        .map(|j| {
            let z = c(x, -top + 2.0 * top * j as f64 / (n_pts - 1) as f64);
            let res = inverse(&crate::linalg::shifted(&a, z))
                .ok_or(LabError::NearSpectrum { re: z.re, im: z.im, sigma_min: 0.0 })?;
            Ok(spectral_norm(&matmul(b, &res)))
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    Ok(ClearLine { gap: surgery.gap, r_prime: x, min_abs_d: min_d, max_inv_norm: max_inv, max_l_norm: max_l, threshold, c1 })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StripCount {
    pub gap: i64,
    pub count: usize,
    pub m: usize,
    pub ratio: f64,
}

/// Eigenvalues of `A` in the open strip `|Re λ - r| < δ|r|^p`, relative to `m`.
pub fn strip_eigenvalue_count(eigenvalues_a: &[C64], gap: i64, r: f64, geometry: &Geometry, m: usize) -> StripCount {
    let half = geometry.delta * abs_pow(r, geometry.p);
    let count = eigenvalues_a.iter().filter(|z| (z.re - r).abs() < half).count();
    StripCount { gap, count, m, ratio: if m == 0 { count as f64 } else { count as f64 / m as f64 } }
}
