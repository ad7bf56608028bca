//! Finite certificates for the unconditional-basis property of a projector family.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::linalg::{quadratic_form, random_unit_vector, range_basis, rank_above, singular_values, spectral_norm, CMatrix, CVector};
use crate::riesz::RANK_THRESHOLD;

/// `Σ_j |(Q_j x, x)|`
pub fn quadratic_form_sum(projectors: &[CMatrix], x: &CVector) -> f64 {
    projectors.iter().map(|q| quadratic_form(q, x).norm()).sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadFormStats {
    pub vectors: usize,
    pub ratio_max: f64,
    /// Index into the test set: basis vectors first, then the random ones.
    pub argmax: usize,
    pub ratio_mean: f64,
}

/// Standard basis vectors followed by `random` seeded unit vectors.
pub fn test_vectors(n: usize, random: usize, seed: u64) -> Vec<CVector> {
    let mut out: Vec<CVector> = (0..n)
        .map(|i| {
            let mut e = CVector::zeros(n);
            e[i] = 1.0.into();
            e
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    out.extend((0..random).map(|_| random_unit_vector(n, &mut rng)));
    out
}

pub fn quad_form_stats(projectors: &[CMatrix], vectors: &[CVector]) -> QuadFormStats {
    let ratios: Vec<f64> = vectors
        .par_iter()
        .map(|x| quadratic_form_sum(projectors, x) / x.norm_squared())
        .collect();
    let (argmax, ratio_max) = ratios
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, r)| if r > best.1 { (i, r) } else { best });
    QuadFormStats {
        vectors: ratios.len(),
        ratio_max,
        argmax,
        ratio_mean: ratios.iter().sum::<f64>() / ratios.len().max(1) as f64,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SignMethod {
    Exact,
    Randomized,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnconditionalConstant {
    pub value: f64,
    pub method: SignMethod,
    /// Maximizing signs, `true` for `+1`.
    pub signs: Vec<bool>,
    pub evaluations: usize,
}

fn signed_norm(projectors: &[CMatrix], signs: &[bool]) -> f64 {
    let n = projectors[0].nrows();
    let mut sum = CMatrix::zeros(n, n);
    for (q, &s) in projectors.iter().zip(signs) {
        if s {
            sum += q;
        } else {
            sum -= q;
        }
    }
    spectral_norm(&sum)
}

fn pattern(bits: u64, k: usize) -> Vec<bool> {
    // the first sign stays +1; a global flip leaves the norm unchanged
    std::iter::once(true).chain((1..k).map(|j| bits >> (j - 1) & 1 == 0)).collect()
}

/// `sup_ε ‖Σ ε_j Q_j‖`: exhaustive over `2^{K-1}` patterns when `K ≤ exact_threshold`,
/// otherwise best of `trials` random patterns refined by single-flip ascent.
pub fn unconditional_constant(projectors: &[CMatrix], exact_threshold: usize, trials: usize, seed: u64) -> UnconditionalConstant {
    let k = projectors.len();
    if k == 0 {
        return UnconditionalConstant { value: 0.0, method: SignMethod::Exact, signs: vec![], evaluations: 0 };
    }
    if k <= exact_threshold && k <= 40 {
        let count = 1u64 << (k - 1);
        let (bits, value) = (0..count)
            .into_par_iter()
            .map(|bits| (bits, signed_norm(projectors, &pattern(bits, k))))
            .reduce(|| (u64::MAX, f64::NEG_INFINITY), |a, b| if b.1 > a.1 || (b.1 == a.1 && b.0 < a.0) { b } else { a });
        return UnconditionalConstant { value, method: SignMethod::Exact, signs: pattern(bits, k), evaluations: count as usize };
    }
    randomized_constant(projectors, trials, seed)
}

pub fn randomized_constant(projectors: &[CMatrix], trials: usize, seed: u64) -> UnconditionalConstant {
    let k = projectors.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let patterns: Vec<Vec<bool>> = (0..trials.max(1))
        .map(|_| std::iter::once(true).chain((1..k).map(|_| rng.random::<bool>())).collect())
        .collect();
    let values: Vec<f64> = patterns.par_iter().map(|s| signed_norm(projectors, s)).collect();
    let mut evaluations = values.len();
    let (mut best_i, mut best) = (0, f64::NEG_INFINITY);
    for (i, &v) in values.iter().enumerate() {
        if v > best {
            best_i = i;
            best = v;
        }
    }
    let mut signs = patterns[best_i].clone();
    loop {
        let flips: Vec<(usize, f64)> = (1..k)
            .into_par_iter()
            .map(|j| {
                let mut s = signs.clone();
                s[j] = !s[j];
                (j, signed_norm(projectors, &s))
            })
            .collect();
        evaluations += flips.len();
        let Some(&(j, v)) = flips.iter().filter(|f| f.1 > best).max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0))) else {
            break;
        };
        signs[j] = !signs[j];
        best = v;
    }
    UnconditionalConstant { value: best, method: SignMethod::Randomized, signs, evaluations }
}

/// Condition number of the matrix whose column blocks are orthonormal bases of
/// the ranges of the projectors.
pub fn similarity_condition(projectors: &[CMatrix]) -> Result<f64> {
    let n = projectors.first().map_or(0, |q| q.nrows());
    let bases: Vec<CMatrix> = projectors
        .par_iter()
        .map(|q| range_basis(q, rank_above(q, RANK_THRESHOLD)))
        .collect();
    let total: usize = bases.iter().map(|b| b.ncols()).sum();
    if total != n {
        return Err(LabError::RankMismatch { expected: n, found: total });
    }
    let mut w = CMatrix::zeros(n, n);
    let mut col = 0;
    for b in &bases {
        w.view_mut((0, col), (n, b.ncols())).copy_from(b);
        col += b.ncols();
    }
    let sv = singular_values(&w);
    Ok(sv[0] / sv[sv.len() - 1])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasisLevel {
    pub label: String,
    pub dimension: usize,
    pub projectors: usize,
    pub quad_form: QuadFormStats,
    pub unconditional: UnconditionalConstant,
    pub similarity_condition: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasisConfig {
    pub exact_threshold: usize,
    pub trials: usize,
    pub random_vectors: usize,
    pub seed: u64,
}

pub fn certify_level(label: &str, projectors: &[CMatrix], cfg: &BasisConfig) -> Result<BasisLevel> {
    let n = projectors.first().map_or(0, |q| q.nrows());
    let vectors = test_vectors(n, cfg.random_vectors, cfg.seed);
    Ok(BasisLevel {
        label: label.to_string(),
        dimension: n,
        projectors: projectors.len(),
        quad_form: quad_form_stats(projectors, &vectors),
        unconditional: unconditional_constant(projectors, cfg.exact_threshold, cfg.trials, cfg.seed),
        similarity_condition: similarity_condition(projectors)?,
    })
}

/// Certificates at successive refinement levels together with their relative changes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasisReport {
    pub levels: Vec<BasisLevel>,
    pub unconditional_changes: Vec<f64>,
    pub quad_form_changes: Vec<f64>,
}

impl BasisReport {
    pub fn from_levels(levels: Vec<BasisLevel>) -> Self {
        let rel = |a: f64, b: f64| (b - a).abs() / a.abs().max(f64::MIN_POSITIVE);
        let unconditional_changes = levels
            .windows(2)
            .map(|w| rel(w[0].unconditional.value, w[1].unconditional.value))
            .collect();
        let quad_form_changes = levels
            .windows(2)
            .map(|w| rel(w[0].quad_form.ratio_max, w[1].quad_form.ratio_max))
            .collect();
        BasisReport { levels, unconditional_changes, quad_form_changes }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, identity, inverse, random_gaussian_matrix};

    fn coordinate_family(n: usize) -> Vec<CMatrix> {
        (0..n)
            .map(|k| {
                let mut p = CMatrix::zeros(n, n);
                p[(k, k)] = c(1.0, 0.0);
                p
            })
            .collect()
    }

    /// Oblique family `S E_k S^{-1}`.
    fn oblique_family(n: usize, seed: u64, strength: f64) -> Vec<CMatrix> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = identity(n) + random_gaussian_matrix(n, &mut rng) * c(strength, 0.0);
        let si = inverse(&s).unwrap();
        coordinate_family(n).into_iter().map(|e| &s * e * &si).collect()
    }

    #[test]
    fn orthogonal_family_is_perfect() {
        let fam = coordinate_family(6);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_unit_vector(6, &mut rng);
        assert!((quadratic_form_sum(&fam, &x) - 1.0).abs() < 1e-14);
        let u = unconditional_constant(&fam, 16, 10, 0);
        assert!((u.value - 1.0).abs() < 1e-12);
        assert_eq!(u.method, SignMethod::Exact);
        assert!((similarity_condition(&fam).unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn two_member_family_matches_direct_norm() {
        let fam = oblique_family(2, 3, 0.6);
        let pair = vec![fam[0].clone(), identity(2) - &fam[0]];
        let u = unconditional_constant(&pair, 16, 1, 0);
        let direct = spectral_norm(&(&fam[0] * c(2.0, 0.0) - identity(2)));
        assert!((u.value - direct).abs() < 1e-12);
    }

    #[test]
    fn complete_family_quad_forms_at_least_one() {
        let fam = oblique_family(7, 5, 0.3);
        for x in test_vectors(7, 20, 2) {
            assert!(quadratic_form_sum(&fam, &x) >= 1.0 - 1e-10);
        }
        let k = similarity_condition(&fam).unwrap();
        assert!(k > 1.0);
    }

    #[test]
    fn randomized_never_beats_exact_and_finds_it_on_small_families() {
        let fam = oblique_family(8, 9, 0.4);
        let exact = unconditional_constant(&fam, 16, 0, 0);
        let rand = randomized_constant(&fam, 512, 4);
        assert!(rand.value <= exact.value + 1e-12);
        assert!((rand.value - exact.value).abs() < 1e-12);
        assert_eq!(exact.evaluations, 128);
    }

    #[test]
    fn constant_is_order_free() {
        let fam = oblique_family(6, 12, 0.5);
        let mut rev = fam.clone();
        rev.reverse();
        let a = unconditional_constant(&fam, 16, 0, 0).value;
        let b = unconditional_constant(&rev, 16, 0, 0).value;
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn rank_deficient_family_is_rejected() {
        let fam = coordinate_family(4);
        assert!(matches!(similarity_condition(&fam[1..]), Err(LabError::RankMismatch { .. })));
    }

    #[test]
    fn report_changes_are_relative() {
        let level = |v: f64| BasisLevel {
            label: String::new(),
            dimension: 1,
            projectors: 1,
            quad_form: QuadFormStats { vectors: 1, ratio_max: v, argmax: 0, ratio_mean: v },
            unconditional: UnconditionalConstant { value: 2.0 * v, method: SignMethod::Exact, signs: vec![], evaluations: 1 },
            similarity_condition: 1.0,
        };
        let rep = BasisReport::from_levels(vec![level(1.0), level(1.1)]);
        assert!((rep.quad_form_changes[0] - 0.1).abs() < 1e-12);
        assert!((rep.unconditional_changes[0] - 0.1).abs() < 1e-12);
    }
}
