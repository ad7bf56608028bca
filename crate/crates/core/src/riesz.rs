//! Riesz projections by contour quadrature and the full projector family.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contour::{build_contour_with, Contour};
use crate::error::{LabError, Result};
use crate::linalg::{c, eigenvalues, identity, inverse, matmul, rank_above, shifted, spectral_norm, trace, CMatrix, C64, I};
use crate::operator_lab::bands::abs_pow;
use crate::operator_lab::ModelOperator;
use crate::region::{region_contains, Region, Shape};
use crate::resolvent::{line_scan, Geometry, LineScanProfile};
use crate::surgery::{
    default_threshold, determinant_profile, find_clear_line, gap_displacement, ClearLine, DeterminantProfile,
    GapSurgery, GridSpec,
};

/// Relative distance below which a contour counts as touching the spectrum.
pub const CONTOUR_GUARD: f64 = 1e-8;
/// Singular values above this count toward the rank of a projector.
pub const RANK_THRESHOLD: f64 = 0.5;
const CHUNK: usize = 64;

#[derive(Clone, Debug, PartialEq)]
pub struct RieszProjection {
    pub matrix: CMatrix,
    pub trace: C64,
    /// Eigenvalues of `M` inside the contour, with orientation sign.
    pub enclosed: i64,
    pub idempotency: f64,
    pub nodes_per_segment: usize,
    /// `‖Q(2n) - Q(n)‖` of the last doubling, when one was made.
    pub quad_delta: Option<f64>,
}

/// Projection engine for one matrix with its spectrum computed once.
pub struct RieszSolver<'a> {
    m: &'a CMatrix,
    eigenvalues: Vec<C64>,
    norm: f64,
}

impl<'a> RieszSolver<'a> {
    pub fn new(m: &'a CMatrix) -> Result<Self> {
        let eigenvalues = eigenvalues(m)?;
        Ok(Self::with_spectrum(m, eigenvalues))
    }

    pub fn with_spectrum(m: &'a CMatrix, eigenvalues: Vec<C64>) -> Self {
        RieszSolver { norm: spectral_norm(m), m, eigenvalues }
    }

    pub fn eigenvalues(&self) -> &[C64] {
        &self.eigenvalues
    }

    fn guard(&self, contour: &Contour) -> Result<()> {
        let floor = CONTOUR_GUARD * self.norm.max(1.0);
        let dist = contour.distances(&self.eigenvalues);
        match self.eigenvalues.iter().zip(dist).find(|(_, d)| *d < floor) {
            Some((z, d)) => Err(LabError::ContourTooClose { re: z.re, im: z.im, distance: d }),
            None => Ok(()),
        }
    }

    fn enclosed(&self, contour: &Contour) -> i64 {
        let region = Region::from(contour.shape.clone());
        let count = self.eigenvalues.iter().filter(|&&z| region_contains(&region, z)).count() as i64;
        count * contour.orientation as i64
    }

    /// `-(1/2πi) Σ w_i (M - λ_i)^{-1}`, summed in node order.
    fn quadrature(&self, contour: &Contour) -> Result<CMatrix> {
        let n = self.m.nrows();
        let mut acc = CMatrix::zeros(n, n);
        let pairs: Vec<(C64, C64)> = contour.nodes.iter().copied().zip(contour.weights.iter().copied()).collect();
        for chunk in pairs.chunks(CHUNK) {
            let terms: Vec<CMatrix> = chunk
                .par_iter()
                .map(|&(z, w)| {
                    let inv = inverse(&shifted(self.m, z))
                        .ok_or(LabError::ContourTooClose { re: z.re, im: z.im, distance: 0.0 })?;
                    Ok(inv * w)
                })
                .collect::<Result<_>>()?;
            for term in terms {
                acc += term;
            }
        }
        Ok(acc * (-1.0 / (2.0 * std::f64::consts::PI * I)))
    }

    pub fn project(&self, contour: &Contour) -> Result<RieszProjection> {
        self.guard(contour)?;
        let q = self.quadrature(contour)?;
        Ok(RieszProjection {
            trace: trace(&q),
            idempotency: spectral_norm(&(matmul(&q, &q) - &q)),
            enclosed: self.enclosed(contour),
            nodes_per_segment: contour.nodes_per_segment,
            quad_delta: None,
            matrix: q,
        })
    }

    /// Doubles the node count until `‖Q(2n) - Q(n)‖ < tol`, up to `max_nodes`
    /// per segment. Returns the finer of the last pair.
    pub fn project_converged(&self, contour: &Contour, tol: f64, max_nodes: usize) -> Result<RieszProjection> {
        let mut coarse = self.project(contour)?;
        let mut n = contour.nodes_per_segment;
        let mut delta = f64::INFINITY;
        while 2 * n <= max_nodes {
            n *= 2;
            let fine = self.project(&contour.with_nodes(n)?)?;
            delta = spectral_norm(&(&fine.matrix - &coarse.matrix));
            coarse = fine;
            if delta < tol {
                coarse.quad_delta = Some(delta);
                return Ok(coarse);
            }
        }
        Err(LabError::QuadratureNotConverged { nodes: n, delta })
    }
}

pub fn riesz_projection(m: &CMatrix, contour: &Contour) -> Result<RieszProjection> {
    RieszSolver::new(m)?.project(contour)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CutConfig {
    pub scan_samples: usize,
    /// Largest number of eigenvalues of `T` allowed in one gap interval.
    #[serde(skip)]
    pub m: usize,
    pub grid: GridSpec,
    /// Clear-line threshold; `2^{-m}/4` when absent.
    pub threshold: Option<f64>,
    pub rectangle_margin: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cut {
    pub gap: i64,
    /// Gap midpoint.
    pub r: f64,
    pub r_prime: f64,
    pub surgered: bool,
    pub clear_line: Option<ClearLine>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutSelection {
    pub n_index: i64,
    /// Every scan from `N` on met the line bound.
    pub asymptotic: bool,
    pub two_sided: bool,
    pub rectangle: Shape,
    pub cuts: Vec<Cut>,
    pub scans: Vec<LineScanProfile>,
    pub surgeries: Vec<GapSurgery>,
    pub profiles: Vec<DeterminantProfile>,
}

impl CutSelection {
    pub fn cut(&self, gap: i64) -> Option<&Cut> {
        self.cuts.iter().find(|c| c.gap == gap)
    }

    /// Scans at gaps that carry cuts, i.e. `|k| ≥ N`.
    pub fn asymptotic_scans(&self) -> impl Iterator<Item = &LineScanProfile> {
        self.scans.iter().filter(|s| self.cut(s.gap).is_some())
    }
}

/// Smallest admissible `N` such that every scan at an index `≥ N` (in absolute
/// value for two-sided layouts) conforms. Falls back to the outermost index.
fn asymptotic_index(scans: &[LineScanProfile], two_sided: bool) -> (i64, bool) {
    let key = |k: i64| if two_sided { k.abs() } else { k };
    let mut levels: Vec<i64> = scans.iter().map(|s| key(s.gap)).collect();
    levels.sort_unstable();
    levels.dedup();
    let floor = if two_sided { 1 } else { i64::MIN };
    let levels: Vec<i64> = levels.into_iter().filter(|&l| l >= floor).collect();
    let top = *levels.last().expect("at least one gap");
    let mut n = None;
    for &level in levels.iter().rev() {
        if scans.iter().filter(|s| key(s.gap) == level).all(|s| s.conforms) {
            n = Some(level);
        } else {
            break;
        }
    }
    match n {
        Some(n) => (n, true),
        None => (top, false),
    }
}

/// Scans every gap midline, fixes `N`, places the cuts and sizes the rectangle
/// holding the remaining spectrum of `A`.
pub fn select_cuts(
    t: &ModelOperator,
    b: &CMatrix,
    eigenvalues_a: &[C64],
    geometry: &Geometry,
    cfg: &CutConfig,
) -> Result<CutSelection> {
    geometry.validate()?;
    let a = t.matrix() + b;
    let two_sided = t.bands.two_sided;
    let mut scans = Vec::new();
    let mut surgeries = Vec::new();
    for gap in t.bands.gaps() {
        let r = gap.midpoint();
        let rad = geometry.b1 * abs_pow(r, geometry.p);
        if t.count_in_open(r - rad, r + rad) > 0 {
            let s = gap_displacement(t, gap.index, geometry.b1, geometry.p, cfg.m)?;
            let a_s = s.surgered().matrix() + b;
            let mut prof = line_scan(s.surgered(), b, &a_s, gap.index, r, geometry, cfg.scan_samples)?;
            prof.surgered = true;
            scans.push(prof);
            surgeries.push(s);
        } else {
            scans.push(line_scan(t, b, &a, gap.index, r, geometry, cfg.scan_samples)?);
        }
    }
    let (n_index, asymptotic) = asymptotic_index(&scans, two_sided);
    let is_cut = |k: i64| if two_sided { k.abs() >= n_index } else { k >= n_index };

    let threshold = cfg.threshold.unwrap_or_else(|| default_threshold(cfg.m));
    let mut cuts = Vec::new();
    let mut profiles = Vec::new();
    for scan in scans.iter().filter(|s| is_cut(s.gap)) {
        match surgeries.iter().find(|s| s.gap == scan.gap) {
            Some(s) => {
                let prof = determinant_profile(s, b, geometry, cfg.grid)?;
                let line = find_clear_line(&prof, s, b, geometry, threshold)?;
                cuts.push(Cut { gap: scan.gap, r: scan.r, r_prime: line.r_prime, surgered: true, clear_line: Some(line) });
                profiles.push(prof);
            }
            None => cuts.push(Cut { gap: scan.gap, r: scan.r, r_prime: scan.r, surgered: false, clear_line: None }),
        }
    }

    let x_hi = cuts.iter().find(|c| c.gap == n_index).map(|c| c.r_prime).expect("cut at N");
    let x_lo_cut = two_sided.then(|| cuts.iter().find(|c| c.gap == -n_index).map(|c| c.r_prime).expect("cut at -N"));
    let inner: Vec<C64> = eigenvalues_a
        .iter()
        .copied()
        .filter(|z| z.re < x_hi && x_lo_cut.is_none_or(|lo| z.re > lo))
        .collect();
    let margin = cfg.rectangle_margin;
    let (x_min, x_lo) = match x_lo_cut {
        Some(lo) => (lo, lo),
        None => {
            let lowest = t.bands.lead_alpha.unwrap_or(t.bands.alphas[0]);
            let lo = inner.iter().map(|z| z.re).fold(lowest, f64::min);
            (lo - margin * (x_hi - lo), lo)
        }
    };
    let y_half = inner
        .iter()
        .map(|z| z.im.abs())
        .fold(geometry.half_height(x_hi).max(geometry.half_height(x_lo)), f64::max);
    let rectangle = Shape::Rectangle { x_min, x_max: x_hi, y_min: -(1.0 + margin) * y_half, y_max: (1.0 + margin) * y_half };
    Ok(CutSelection { n_index, asymptotic, two_sided, rectangle, cuts, scans, surgeries, profiles })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureConfig {
    pub nodes_per_segment: usize,
    pub rule: String,
    pub tol: f64,
    pub max_nodes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectorInfo {
    pub index: i64,
    pub shape: Shape,
    pub nodes_per_segment: usize,
    pub quad_delta: f64,
    pub trace_re: f64,
    pub trace_im: f64,
    pub enclosed: i64,
    pub rank: usize,
    pub norm: f64,
    pub idempotency: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyResiduals {
    pub idempotency_max: f64,
    pub minimality_max: f64,
    pub completeness: f64,
    pub trace_sum: f64,
    pub trace_integrality_max: f64,
    pub trace_count_max: f64,
    pub norms: Vec<f64>,
}

impl FamilyResiduals {
    pub fn within(&self, tol: f64) -> bool {
        self.idempotency_max < tol && self.minimality_max < tol && self.completeness < tol
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionFamily {
    /// `Q_0` first, then the trapezoid projectors by increasing index.
    pub projectors: Vec<CMatrix>,
    pub info: Vec<ProjectorInfo>,
    pub cuts: Vec<Cut>,
    pub n_index: i64,
    pub residuals: FamilyResiduals,
}

impl ProjectionFamily {
    pub fn len(&self) -> usize {
        self.projectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.projectors.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.projectors.first().map_or(0, |q| q.nrows())
    }
}

/// Contour shapes of the family: the rectangle, then one trapezoid per pair of
/// adjacent cuts outside it.
pub fn family_shapes(selection: &CutSelection, geometry: &Geometry) -> Vec<(i64, Shape)> {
    let mut out = vec![(0, selection.rectangle.clone())];
    let mut cuts: Vec<&Cut> = selection.cuts.iter().collect();
    cuts.sort_by_key(|c| c.gap);
    for w in cuts.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        if hi.gap != lo.gap + 1 || (selection.two_sided && lo.gap == -selection.n_index) {
            continue;
        }
        let shape = Shape::CurvilinearTrapezoid { r_left: lo.r_prime, r_right: hi.r_prime, p: geometry.p, h: geometry.h };
        out.push((hi.gap, shape));
    }
    out
}

pub fn projection_family(
    a: &CMatrix,
    eigenvalues_a: &[C64],
    geometry: &Geometry,
    selection: &CutSelection,
    quad: &QuadratureConfig,
) -> Result<ProjectionFamily> {
    let solver = RieszSolver::with_spectrum(a, eigenvalues_a.to_vec());
    let shapes = family_shapes(selection, geometry);
    let results: Vec<(CMatrix, ProjectorInfo)> = shapes
        .par_iter()
        .map(|(index, shape)| {
            let wrap = |e: LabError| LabError::Projector { index: *index, source: Box::new(e) };
            let contour = build_contour_with(shape, quad.nodes_per_segment, &quad.rule).map_err(wrap)?;
            let q = solver.project_converged(&contour, quad.tol, quad.max_nodes).map_err(wrap)?;
            let info = ProjectorInfo {
                index: *index,
                shape: shape.clone(),
                nodes_per_segment: q.nodes_per_segment,
                quad_delta: q.quad_delta.unwrap_or(0.0),
                trace_re: q.trace.re,
                trace_im: q.trace.im,
                enclosed: q.enclosed,
                rank: rank_above(&q.matrix, RANK_THRESHOLD),
                norm: spectral_norm(&q.matrix),
                idempotency: q.idempotency,
            };
            Ok((q.matrix, info))
        })
        .collect::<Result<_>>()?;
    let (projectors, info): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let residuals = validate_family(&projectors, &info);
    Ok(ProjectionFamily { projectors, info, cuts: selection.cuts.clone(), n_index: selection.n_index, residuals })
}

/// Idempotency, mutual annihilation, completeness and trace diagnostics.
pub fn validate_family(projectors: &[CMatrix], info: &[ProjectorInfo]) -> FamilyResiduals {
    let n = projectors.first().map_or(0, |q| q.nrows());
    let norms: Vec<f64> = projectors.par_iter().map(spectral_norm).collect();
    let idempotency_max = projectors
        .par_iter()
        .map(|q| spectral_norm(&(matmul(q, q) - q)))
        .collect::<Vec<_>>()
        .into_iter()
        .fold(0.0, f64::max);
    let pairs: Vec<(usize, usize)> = (0..projectors.len())
        .flat_map(|j| (0..projectors.len()).filter(move |&k| k != j).map(move |k| (j, k)))
        .collect();
    let minimality_max = pairs
        .par_iter()
        .map(|&(j, k)| spectral_norm(&matmul(&projectors[j], &projectors[k])))
        .collect::<Vec<_>>()
        .into_iter()
        .fold(0.0, f64::max);
    let mut total = CMatrix::zeros(n, n);
    for q in projectors {
        total += q;
    }
    let completeness = spectral_norm(&(total - identity(n)));
    let traces: Vec<C64> = projectors.iter().map(trace).collect();
    let trace_sum = traces.iter().map(|t| t.re).sum::<f64>();
    let trace_integrality_max = traces
        .iter()
        .map(|t| (t - c(t.re.round(), 0.0)).norm())
        .fold(0.0, f64::max);
    let trace_count_max = traces
        .iter()
        .zip(info)
        .map(|(t, i)| (t - c(i.enclosed as f64, 0.0)).norm())
        .fold(0.0, f64::max);
    FamilyResiduals { idempotency_max, minimality_max, completeness, trace_sum, trace_integrality_max, trace_count_max, norms }
}

/// Orthogonal spectral projectors of `T` for the same regions as the family.
pub fn comparison_projectors(t: &ModelOperator, info: &[ProjectorInfo]) -> Vec<CMatrix> {
    info.iter()
        .map(|i| {
            let region = Region::from(i.shape.clone());
            t.spectral_projector(|s| region_contains(&region, c(s, 0.0)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contour::build_contour;
    use crate::linalg::{random_gaussian_matrix, CVector};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn circle(x: f64, y: f64, r: f64) -> Shape {
        Shape::Circle { center_re: x, center_im: y, radius: r }
    }

    #[test]
    fn diagonal_cauchy_projection() {
        let m = CMatrix::from_diagonal(&CVector::from_vec(vec![c(0.0, 0.0), c(5.0, 0.0)]));
        let q = riesz_projection(&m, &build_contour(&circle(0.0, 0.0, 1.0), 64).unwrap()).unwrap();
        let want = CMatrix::from_diagonal(&CVector::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0)]));
        assert!((q.matrix - want).norm() < 1e-10);
        assert_eq!(q.enclosed, 1);
    }

    #[test]
    fn jordan_block_gives_identity() {
        let m = CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]);
        let q = riesz_projection(&m, &build_contour(&circle(1.0, 0.0, 1.0), 64).unwrap()).unwrap();
        assert!((q.matrix - identity(2)).norm() < 1e-10);
    }

    #[test]
    fn random_matrix_trace_counts_enclosed_eigenvalues() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let a = random_gaussian_matrix(20, &mut rng);
        let solver = RieszSolver::new(&a).unwrap();
        // center on the eigenvalue whose 7th and 8th nearest neighbours are best separated
        let (center, radius) = solver
            .eigenvalues()
            .iter()
            .map(|&z0| {
                let mut d: Vec<f64> = solver.eigenvalues().iter().map(|z| (z - z0).norm()).collect();
                d.sort_by(f64::total_cmp);
                (z0, d[6], d[7])
            })
            .max_by(|a, b| (a.2 - a.1).total_cmp(&(b.2 - b.1)))
            .map(|(z0, d6, d7)| (z0, 0.5 * (d6 + d7)))
            .unwrap();
        let contour = build_contour(&circle(center.re, center.im, radius), 256).unwrap();
        let q = solver.project_converged(&contour, 1e-8, 4096).unwrap();
        assert_eq!(q.enclosed, 7);
        assert!((q.trace - c(7.0, 0.0)).norm() < 1e-6);
        assert_eq!(rank_above(&q.matrix, RANK_THRESHOLD), 7);
        assert!(q.quad_delta.unwrap() < 1e-8);
    }

    #[test]
    fn guard_refuses_contours_through_eigenvalues() {
        let m = CMatrix::from_diagonal(&CVector::from_vec(vec![c(1.0, 0.0), c(3.0, 0.0)]));
        let err = riesz_projection(&m, &build_contour(&circle(0.0, 0.0, 1.0), 32).unwrap()).unwrap_err();
        assert!(matches!(err, LabError::ContourTooClose { .. }));
    }

    #[test]
    fn orthogonal_family_residuals_vanish() {
        let n = 5;
        let projectors: Vec<CMatrix> = (0..n)
            .map(|k| {
                let mut p = CMatrix::zeros(n, n);
                p[(k, k)] = c(1.0, 0.0);
                p
            })
            .collect();
        let info: Vec<ProjectorInfo> = (0..n)
            .map(|k| ProjectorInfo {
                index: k as i64,
                shape: circle(k as f64, 0.0, 0.5),
                nodes_per_segment: 0,
                quad_delta: 0.0,
                trace_re: 1.0,
                trace_im: 0.0,
                enclosed: 1,
                rank: 1,
                norm: 1.0,
                idempotency: 0.0,
            })
            .collect();
        let res = validate_family(&projectors, &info);
        assert!(res.within(1e-12));
        assert_eq!(res.trace_count_max, 0.0);
        let dropped = validate_family(&projectors[1..], &info[1..]);
        assert!((dropped.completeness - spectral_norm(&projectors[0])).abs() < 1e-15);
    }

    #[test]
    fn resolvent_identity_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let t = CMatrix::from_diagonal(&CVector::from_iterator(16, (0..16).map(|k| c(k as f64 * 1.5, 0.0))));
        let b = random_gaussian_matrix(16, &mut rng) * c(0.1, 0.0);
        let a = &t + &b;
        for k in 0..20 {
            let z = c(0.7 * k as f64 + 0.3, 0.9 - 0.1 * k as f64);
            let ra = inverse(&shifted(&a, z)).unwrap();
            let rt = inverse(&shifted(&t, z)).unwrap();
            let resid = &ra - &rt + &ra * &b * &rt;
            assert!(spectral_norm(&resid) <= 1e-10 * spectral_norm(&ra));
        }
    }

    fn scan_stub(gap: i64, conforms: bool) -> LineScanProfile {
        LineScanProfile {
            gap,
            r: gap as f64,
            surgered: false,
            samples: vec![],
            max_s_norm: 0.0,
            max_m_norm: 1.0,
            bound: 0.5,
            conforms,
            neumann_holds: true,
            m_within_bound: true,
        }
    }

    #[test]
    fn asymptotic_index_needs_every_later_scan() {
        let scans: Vec<_> = [(0, false), (1, true), (2, false), (3, true), (4, true)]
            .iter()
            .map(|&(g, ok)| scan_stub(g, ok))
            .collect();
        assert_eq!(asymptotic_index(&scans, false), (3, true));
        let bad: Vec<_> = (0..3).map(|g| scan_stub(g, g != 2)).collect();
        assert_eq!(asymptotic_index(&bad, false), (2, false));
        let two: Vec<_> = [(-2, true), (-1, false), (0, false), (1, true), (2, true)]
            .iter()
            .map(|&(g, ok)| scan_stub(g, ok))
            .collect();
        assert_eq!(asymptotic_index(&two, true), (2, true));
    }
}
