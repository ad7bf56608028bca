//! Finite self-adjoint model operators with banded spectrum.

use std::sync::OnceLock;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::bands::{abs_pow, BandSpec};
use crate::error::{LabError, Result};
use crate::linalg::{c, matmul, CMatrix, C64};
use crate::registry::{Named, Registry};

/// Where an eigenvalue of the model operator sits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpectralTag {
    Band(i64),
    Gap(i64),
}

/// Hermitian `T = U diag(t) U*` together with the band layout it realizes.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelOperator {
    pub eigenvalues: Vec<f64>,
    /// Orthonormal eigenvectors as columns.
    pub eigenvectors: CMatrix,
    pub tags: Vec<SpectralTag>,
    pub bands: BandSpec,
}

impl ModelOperator {
    pub fn dimension(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_diagonal(&self) -> bool {
        self.eigenvectors == CMatrix::identity(self.dimension(), self.dimension())
    }

    /// Dense matrix built from the spectral data.
    pub fn matrix(&self) -> CMatrix {
        self.function(|t| C64::from(t))
    }

    /// `f(T)` through the functional calculus.
    pub fn function(&self, f: impl Fn(f64) -> C64) -> CMatrix {
        let n = self.dimension();
        let u = &self.eigenvectors;
        let mut scaled = u.clone();
        for j in 0..n {
            let fj = f(self.eigenvalues[j]);
            for i in 0..n {
                scaled[(i, j)] *= fj;
            }
        }
        if self.is_diagonal() {
            return scaled;
        }
        matmul(&scaled, &u.adjoint())
    }

    /// `|T|^p` with `0^p = 0` for `p > 0`.
    pub fn abs_power(&self, p: f64) -> CMatrix {
        self.function(|t| C64::from(abs_pow(t, p)))
    }

    /// `(T - λ)^{-1}` from the eigendecomposition.
    pub fn resolvent(&self, lambda: C64) -> Result<CMatrix> {
        let floor = 1e-14 * self.norm().max(f64::MIN_POSITIVE);
        let d = self.distance_to_spectrum(lambda);
        if d <= floor {
            return Err(LabError::NearSpectrum {
                re: lambda.re,
                im: lambda.im,
                sigma_min: d,
            });
        }
        Ok(self.function(|t| C64::from(1.0) / (c(t, 0.0) - lambda)))
    }

    pub fn distance_to_spectrum(&self, lambda: C64) -> f64 {
        self.eigenvalues
            .iter()
            .map(|&t| (c(t, 0.0) - lambda).norm())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn norm(&self) -> f64 {
        self.eigenvalues.iter().fold(0.0f64, |a, t| a.max(t.abs()))
    }

    /// Orthogonal projector onto eigenvectors whose eigenvalue satisfies `keep`.
    pub fn spectral_projector(&self, keep: impl Fn(f64) -> bool) -> CMatrix {
        self.function(|t| if keep(t) { C64::from(1.0) } else { C64::from(0.0) })
    }

    /// Same spectrum, eigenvectors rotated by the unitary `u`.
    pub fn conjugated(&self, u: &CMatrix) -> Result<ModelOperator> {
        if u.nrows() != self.dimension() || u.ncols() != self.dimension() {
            return Err(LabError::DimensionMismatch {
                expected: self.dimension(),
                found: u.nrows(),
            });
        }
        Ok(ModelOperator {
            eigenvectors: matmul(u, &self.eigenvectors),
            ..self.clone()
        })
    }

    /// Indices of eigenvalues whose tag disagrees with the band layout.
    pub fn membership_failures(&self) -> Vec<usize> {
        self.eigenvalues
            .iter()
            .zip(&self.tags)
            .enumerate()
            .filter(|(_, (&t, tag))| match tag {
                SpectralTag::Band(k) => !self.bands.band(*k).is_some_and(|b| b.contains(t)),
                SpectralTag::Gap(k) => !self.bands.gap(*k).is_some_and(|g| g.contains(t)),
            })
            .map(|(i, _)| i)
            .collect()
    }

    /// Eigenvalues (with multiplicity) in the open interval `(lo, hi)`.
    pub fn count_in_open(&self, lo: f64, hi: f64) -> usize {
        self.eigenvalues.iter().filter(|&&t| lo < t && t < hi).count()
    }
}

/// How sample eigenvalues are placed inside a band.
pub trait BandPlacement: Named + Send + Sync {
    /// `count` sorted points inside `[lo, hi]`.
    fn place(&self, lo: f64, hi: f64, count: usize, rng: &mut dyn RngCore) -> Vec<f64>;
}

fn grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![0.5 * (lo + hi)];
    }
    let step = (hi - lo) / (count - 1) as f64;
    (0..count)
        .map(|i| if i + 1 == count { hi } else { lo + step * i as f64 })
        .collect()
}

pub struct UniformGrid;

impl Named for UniformGrid {
    fn name(&self) -> &'static str {
        "uniform-grid"
    }
}

impl BandPlacement for UniformGrid {
    fn place(&self, lo: f64, hi: f64, count: usize, _rng: &mut dyn RngCore) -> Vec<f64> {
        grid(lo, hi, count)
    }
}

/// Grid with interior points moved by up to a quarter spacing; endpoints stay.
pub struct JitteredGrid;

impl Named for JitteredGrid {
    fn name(&self) -> &'static str {
        "jittered-grid"
    }
}

impl BandPlacement for JitteredGrid {
    fn place(&self, lo: f64, hi: f64, count: usize, rng: &mut dyn RngCore) -> Vec<f64> {
        let mut pts = grid(lo, hi, count);
        if count > 2 {
            let step = (hi - lo) / (count - 1) as f64;
            for x in pts.iter_mut().take(count - 1).skip(1) {
                *x += step * (rng.random::<f64>() - 0.5) * 0.5;
            }
        }
        pts
    }
}

pub struct EndpointsPlusRandom;

impl Named for EndpointsPlusRandom {
    fn name(&self) -> &'static str {
        "endpoints-plus-random"
    }
}

impl BandPlacement for EndpointsPlusRandom {
    fn place(&self, lo: f64, hi: f64, count: usize, rng: &mut dyn RngCore) -> Vec<f64> {
        if count <= 2 {
            return grid(lo, hi, count);
        }
        let mut pts = vec![lo, hi];
        pts.extend((0..count - 2).map(|_| lo + (hi - lo) * rng.random::<f64>()));
        pts.sort_by(f64::total_cmp);
        pts
    }
}

pub fn placements() -> &'static Registry<dyn BandPlacement> {
    static REG: OnceLock<Registry<dyn BandPlacement>> = OnceLock::new();
    REG.get_or_init(|| {
        let mut reg: Registry<dyn BandPlacement> = Registry::new("placement");
        reg.register(Box::new(UniformGrid))
            .register(Box::new(JitteredGrid))
            .register(Box::new(EndpointsPlusRandom));
        reg
    })
}

/// Diagonal operator sampling every band with `points_per_band` eigenvalues.
pub fn build_band_operator(
    bands: &BandSpec,
    points_per_band: usize,
    placement: &str,
    seed: u64,
) -> Result<ModelOperator> {
    bands.validate()?;
    if points_per_band == 0 {
        return Err(LabError::InvalidParameter("points_per_band must be at least 1".into()));
    }
    let strategy = placements().get(placement)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut eigenvalues = Vec::new();
    let mut tags = Vec::new();
    for band in bands.bands() {
        for t in strategy.place(band.lo, band.hi, points_per_band, &mut rng) {
            eigenvalues.push(t);
            tags.push(SpectralTag::Band(band.index));
        }
    }
    let n = eigenvalues.len();
    Ok(ModelOperator {
        eigenvalues,
        eigenvectors: CMatrix::identity(n, n),
        tags,
        bands: bands.clone(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InGapAssignment {
    pub gap: i64,
    pub value: f64,
    pub multiplicity: usize,
}

/// Appends eigenvalues inside gaps; each gap may hold at most `m` of them.
pub fn add_ingap_eigenvalues(
    t: &ModelOperator,
    assignments: &[InGapAssignment],
    m: usize,
) -> Result<ModelOperator> {
    let mut per_gap: std::collections::BTreeMap<i64, usize> = Default::default();
    for tag in &t.tags {
        if let SpectralTag::Gap(k) = tag {
            *per_gap.entry(*k).or_default() += 1;
        }
    }
    for a in assignments {
        let gap = t.bands.gap(a.gap).ok_or_else(|| {
            LabError::InvalidParameter(format!("band layout has no gap with index {}", a.gap))
        })?;
        if !gap.contains(a.value) {
            return Err(LabError::ValueOutsideGap {
                gap: a.gap,
                value: a.value,
                lo: gap.lo,
                hi: gap.hi,
            });
        }
        let count = per_gap.entry(a.gap).or_default();
        *count += a.multiplicity;
        if *count > m {
            return Err(LabError::GapMultiplicity {
                gap: a.gap,
                count: *count,
                m,
            });
        }
    }

    let added: usize = assignments.iter().map(|a| a.multiplicity).sum();
    let n = t.dimension();
    let mut eigenvectors = CMatrix::identity(n + added, n + added);
    eigenvectors.view_mut((0, 0), (n, n)).copy_from(&t.eigenvectors);
    let mut eigenvalues = t.eigenvalues.clone();
    let mut tags = t.tags.clone();
    for a in assignments {
        for _ in 0..a.multiplicity {
            eigenvalues.push(a.value);
            tags.push(SpectralTag::Gap(a.gap));
        }
    }
    Ok(ModelOperator {
        eigenvalues,
        eigenvectors,
        tags,
        bands: t.bands.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{hermitian_defect, random_contraction, trace};
    use crate::operator_lab::bands::make_power_gap_bands;

    #[test]
    fn uniform_grid_on_unit_band() {
        let spec = BandSpec::from_bands(&[(0.0, 1.0)]).unwrap();
        let t = build_band_operator(&spec, 3, "uniform-grid", 0).unwrap();
        assert_eq!(t.eigenvalues, vec![0.0, 0.5, 1.0]);
        assert!(t.is_diagonal());
    }

    #[test]
    fn jittered_operator_is_deterministic() {
        let spec = make_power_gap_bands(0.5, 1.0, 1.0, 4, 1.0, false).unwrap();
        let a = build_band_operator(&spec, 8, "jittered-grid", 7).unwrap();
        let b = build_band_operator(&spec, 8, "jittered-grid", 7).unwrap();
        assert_eq!(a.eigenvalues, b.eigenvalues);
        let other = build_band_operator(&spec, 8, "jittered-grid", 8).unwrap();
        assert_ne!(a.eigenvalues, other.eigenvalues);
    }

    #[test]
    fn every_placement_passes_membership_audit() {
        let spec = make_power_gap_bands(0.25, 1.0, 2.0, 5, 1.0, true).unwrap();
        for name in placements().names() {
            let t = build_band_operator(&spec, 8, name, 3).unwrap();
            assert!(t.membership_failures().is_empty(), "{name}");
            assert_eq!(t.dimension(), 80);
        }
    }

    #[test]
    fn unknown_placement_and_empty_points_rejected() {
        let spec = BandSpec::from_bands(&[(0.0, 1.0)]).unwrap();
        assert!(build_band_operator(&spec, 3, "chebyshev", 0).is_err());
        assert!(build_band_operator(&spec, 0, "uniform-grid", 0).is_err());
    }

    #[test]
    fn rotated_operator_is_hermitian() {
        let spec = make_power_gap_bands(0.0, 1.0, 1.0, 3, 1.0, false).unwrap();
        let t = build_band_operator(&spec, 4, "uniform-grid", 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        // the unitary polar factor of a random matrix
        let g = random_contraction(12, &mut rng);
        let svd = g.svd(true, true);
        let u = svd.u.unwrap() * svd.v_t.unwrap();
        let rotated = t.conjugated(&u).unwrap();
        assert!(hermitian_defect(&rotated.matrix()) < 1e-12);
        let tr = trace(&rotated.matrix()).re;
        assert!((tr - t.eigenvalues.iter().sum::<f64>()).abs() < 1e-10);
    }

    #[test]
    fn ingap_insertion_and_guards() {
        let spec = BandSpec::from_bands(&[(1.0, 2.0), (4.0, 5.0)]).unwrap();
        let t = build_band_operator(&spec, 2, "uniform-grid", 0).unwrap();
        let one = add_ingap_eigenvalues(&t, &[InGapAssignment { gap: 1, value: 3.0, multiplicity: 1 }], 1).unwrap();
        assert!(one.eigenvalues.contains(&3.0));
        assert_eq!(one.tags.last(), Some(&SpectralTag::Gap(1)));
        assert!(one.membership_failures().is_empty());

        let err = add_ingap_eigenvalues(
            &t,
            &[
                InGapAssignment { gap: 1, value: 2.5, multiplicity: 1 },
                InGapAssignment { gap: 1, value: 3.5, multiplicity: 1 },
            ],
            1,
        )
        .unwrap_err();
        assert!(err.to_string().contains("gap multiplicity exceeds m"));

        let err = add_ingap_eigenvalues(&t, &[InGapAssignment { gap: 1, value: 4.5, multiplicity: 1 }], 1).unwrap_err();
        assert!(matches!(err, LabError::ValueOutsideGap { .. }));

        let two = add_ingap_eigenvalues(&t, &[InGapAssignment { gap: 1, value: 3.0, multiplicity: 2 }], 3).unwrap();
        let before = trace(&t.matrix()).re;
        let after = trace(&two.matrix()).re;
        assert!((after - before - 6.0).abs() < 1e-12);
        assert_eq!(two.dimension(), t.dimension() + 2);
    }
}
