mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use rieszlab::basis::{quad_form_stats, quadratic_form_sum, randomized_constant, similarity_condition, test_vectors, unconditional_constant, SignMethod};
use rieszlab::linalg::{c, identity, CMatrix};

use common::{nalgebra_norm, random_unitary};

/// Complete family `V E_j V^{-1}` where `E_j` selects the `j`-th block of coordinates.
fn family(blocks: &[usize], skew: f64, seed: u64) -> Vec<CMatrix> {
    let n: usize = blocks.iter().sum();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = CMatrix::from_fn(n, n, |_, _| c(rng.sample(StandardNormal), rng.sample(StandardNormal)));
    let v = identity(n) + g * c(skew / (n as f64).sqrt(), 0.0);
    let vinv = v.clone().try_inverse().unwrap();
    let mut start = 0;
    blocks
        .iter()
        .map(|&size| {
            let e = CMatrix::from_fn(n, n, |i, j| if i == j && (start..start + size).contains(&i) { c(1.0, 0.0) } else { c(0.0, 0.0) });
            start += size;
            &v * e * &vinv
        })
        .collect()
}

fn brute_force(projectors: &[CMatrix]) -> f64 {
    let k = projectors.len();
    (0..1u32 << k)
        .map(|bits| {
            let sum = projectors
                .iter()
                .enumerate()
                .fold(CMatrix::zeros(projectors[0].nrows(), projectors[0].nrows()), |acc, (j, q)| {
                    if bits >> j & 1 == 1 { acc + q } else { acc - q }
                });
            nalgebra_norm(&sum)
        })
        .fold(0.0, f64::max)
}

fn blocks() -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(1usize..4, 2..8)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 32, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn quadratic_forms_dominate_the_norm(blocks in blocks(), skew in 0.0f64..0.4, seed in any::<u64>()) {
        let qs = family(&blocks, skew, seed);
        let n = qs[0].nrows();
        for x in test_vectors(n, 16, seed) {
            prop_assert!(quadratic_form_sum(&qs, &x) >= x.norm_squared() * (1.0 - 1e-12));
        }
    }

    #[test]
    fn certificates_ignore_the_order(blocks in blocks(), skew in 0.0f64..0.4, seed in any::<u64>()) {
        let qs = family(&blocks, skew, seed);
        let mut shuffled = qs.clone();
        shuffled.reverse();
        shuffled.rotate_left(seed as usize % qs.len());
        let a = unconditional_constant(&qs, 12, 100, seed);
        let b = unconditional_constant(&shuffled, 12, 100, seed);
        prop_assert!((a.value - b.value).abs() <= 1e-10 * a.value);
        let vectors = test_vectors(qs[0].nrows(), 8, seed);
        let sa = quad_form_stats(&qs, &vectors);
        let sb = quad_form_stats(&shuffled, &vectors);
        prop_assert!((sa.ratio_max - sb.ratio_max).abs() <= 1e-10 * sa.ratio_max);
        let ca = similarity_condition(&qs).unwrap();
        let cb = similarity_condition(&shuffled).unwrap();
        prop_assert!((ca - cb).abs() <= 1e-8 * ca);
    }

    #[test]
    fn exhaustive_search_is_exact(blocks in blocks(), skew in 0.0f64..0.6, seed in any::<u64>()) {
        let qs = family(&blocks, skew, seed);
        let exact = unconditional_constant(&qs, 12, 0, seed);
        prop_assert_eq!(exact.method, SignMethod::Exact);
        prop_assert_eq!(exact.evaluations, 1 << (qs.len() - 1));
        let oracle = brute_force(&qs);
        prop_assert!((exact.value - oracle).abs() <= 1e-9 * oracle);
        let random = randomized_constant(&qs, 4, seed);
        prop_assert!(random.value <= exact.value * (1.0 + 1e-12));
        // ‖Σ ε_j Q_j‖ = ‖W diag(ε) W^{-1}‖ ≤ cond(W)
        let cond = similarity_condition(&qs).unwrap();
        prop_assert!(exact.value <= cond * (1.0 + 1e-9));
    }

    #[test]
    fn orthogonal_families_have_unit_condition(blocks in blocks(), seed in any::<u64>()) {
        let n: usize = blocks.iter().sum();
        let u = random_unitary(n, seed);
        let qs: Vec<CMatrix> = family(&blocks, 0.0, seed).iter().map(|e| &u * e * u.adjoint()).collect();
        let cond = similarity_condition(&qs).unwrap();
        prop_assert!((cond - 1.0).abs() < 1e-10, "{cond}");
        for (j, a) in qs.iter().enumerate() {
            for b in qs.iter().skip(j + 1) {
                prop_assert!(nalgebra_norm(&(a.adjoint() * b)) <= 1e-8);
            }
        }
        prop_assert!((unconditional_constant(&qs, 12, 0, seed).value - 1.0).abs() < 1e-10);
    }
}

#[test]
fn large_families_fall_back_to_random_search() {
    let qs = family(&[1; 16], 0.3, 9);
    let got = unconditional_constant(&qs, 12, 50, 9);
    assert_eq!(got.method, SignMethod::Randomized);
    assert!(got.value >= 1.0);
    assert_eq!(got, unconditional_constant(&qs, 12, 50, 9));
    assert!(got.value <= similarity_condition(&qs).unwrap() * (1.0 + 1e-9));
}
