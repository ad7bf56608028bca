#![allow(dead_code)]

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rieszlab::experiment::ScenarioConfig;
use rieszlab::linalg::{c, CMatrix, C64};

pub fn config_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

pub fn bundled(name: &str) -> ScenarioConfig {
    ScenarioConfig::load(&config_dir().join(name)).unwrap()
}

/// The parabolic scenario shrunk to a few small bands for fast pipeline runs.
pub fn small(count: usize, points_per_band: usize) -> ScenarioConfig {
    let mut cfg = bundled("parabolic.json");
    cfg.bands.count = count;
    cfg.bands.points_per_band = points_per_band;
    cfg.perturbation.trials = 8;
    cfg.perturbation.ascent_steps = 10;
    cfg.perturbation.audit_samples = 500;
    cfg.cuts.scan_samples = 17;
    cfg.cuts.grid.lines = 9;
    cfg.cuts.grid.points_per_line = 17;
    cfg.basis.refinement = vec![points_per_band];
    cfg.basis.trials = 200;
    cfg.basis.random_vectors = 8;
    cfg.summability.k_max = count.min(3);
    cfg.summability.nodes = 64;
    cfg
}

/// Haar-like unitary from the QR factor of a complex Gaussian matrix.
pub fn random_unitary(n: usize, seed: u64) -> CMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = CMatrix::from_fn(n, n, |_, _| c(rng.sample(StandardNormal), rng.sample(StandardNormal)));
    g.qr().q()
}

pub fn nalgebra_norm(m: &CMatrix) -> f64 {
    m.singular_values().iter().cloned().fold(0.0, f64::max)
}

pub fn nalgebra_eigenvalues(m: &CMatrix) -> Vec<C64> {
    let (_, t) = nalgebra::Schur::new(m.clone()).unpack();
    t.diagonal().iter().copied().collect()
}
