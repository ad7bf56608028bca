//! Dense complex linear algebra helpers on top of nalgebra.

use faer::linalg::solvers::DenseSolveCore;
use faer::{Accum, MatMut, MatRef, Par};
use nalgebra::{DMatrix, DVector, Schur};
use num_complex::Complex;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{LabError, Result};

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub const I: C64 = C64 { re: 0.0, im: 1.0 };

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn view(m: &CMatrix) -> MatRef<'_, C64> {
    MatRef::from_column_major_slice(m.as_slice(), m.nrows(), m.ncols())
}

fn from_faer(m: MatRef<'_, C64>) -> CMatrix {
    CMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// Singular values in descending order.
pub fn singular_values(m: &CMatrix) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    let mut s: Vec<f64> = match view(m).singular_values() {
        Ok(s) => s,
        Err(_) => m.singular_values().iter().copied().collect(),
    };
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Spectral (operator 2-) norm, from the top eigenvalue of the Gram matrix;
/// squaring costs nothing in relative accuracy at the top of the spectrum.
pub fn spectral_norm(m: &CMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    let v = view(m);
    let gram = if m.nrows() >= m.ncols() { v.adjoint() * v } else { v * v.adjoint() };
    match gram.self_adjoint_eigenvalues(faer::Side::Lower) {
        Ok(ev) => ev.into_iter().fold(0.0, f64::max).sqrt(),
        Err(_) => singular_values(m).first().copied().unwrap_or(0.0),
    }
}

pub fn min_singular_value(m: &CMatrix) -> f64 {
    singular_values(m).last().copied().unwrap_or(0.0)
}

pub fn matmul(a: &CMatrix, b: &CMatrix) -> CMatrix {
    assert_eq!(a.ncols(), b.nrows(), "matmul dimension mismatch");
    if a.is_empty() || b.is_empty() {
        return CMatrix::zeros(a.nrows(), b.ncols());
    }
    let mut out = CMatrix::zeros(a.nrows(), b.ncols());
    let (r, c) = (out.nrows(), out.ncols());
    let dst = MatMut::from_column_major_slice_mut(out.as_mut_slice(), r, c);
    faer::linalg::matmul::matmul(dst, Accum::Replace, view(a), view(b), C64::new(1.0, 0.0), Par::Seq);
    out
}

pub fn shifted(m: &CMatrix, lambda: C64) -> CMatrix {
    let mut out = m.clone();
    for i in 0..out.nrows() {
        out[(i, i)] -= lambda;
    }
    out
}

/// `None` for exactly singular or non-finite results.
pub fn inverse(m: &CMatrix) -> Option<CMatrix> {
    if m.is_empty() {
        return Some(m.clone());
    }
    let lu = view(m).partial_piv_lu();
    let u = lu.U();
    if (0..u.nrows()).any(|i| u[(i, i)] == C64::new(0.0, 0.0)) {
        return None;
    }
    let inv = from_faer(lu.inverse().as_ref());
    inv.iter().all(|z| z.re.is_finite() && z.im.is_finite()).then_some(inv)
}

pub fn determinant(m: &CMatrix) -> C64 {
    if m.is_empty() {
        return C64::new(1.0, 0.0);
    }
    view(m).determinant()
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

/// Eigenvalues of a general complex matrix from its complex Schur form.
pub fn eigenvalues(m: &CMatrix) -> Result<Vec<C64>> {
    let n = m.nrows();
    if n == 0 {
        return Ok(Vec::new());
    }
    if let Ok(eigs) = view(m).eigenvalues() {
        return Ok(eigs);
    }
    let schur = Schur::try_new(m.clone(), f64::EPSILON, 2000 * n.max(8))
        .ok_or_else(|| LabError::Decomposition("complex Schur iteration did not converge".into()))?;
    let (_, t) = schur.unpack();
    Ok((0..n).map(|i| t[(i, i)]).collect())
}

/// Largest |Im| deviation from Hermitian symmetry relative to the matrix scale.
pub fn hermitian_defect(m: &CMatrix) -> f64 {
    let scale = m.iter().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    (m - m.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max) / scale
}

pub fn random_gaussian_matrix<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMatrix {
    CMatrix::from_fn(n, n, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        c(re, im)
    })
}

/// Complex Gaussian matrix rescaled to spectral norm exactly one.
pub fn random_contraction<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMatrix {
    let g = random_gaussian_matrix(n, rng);
    let norm = spectral_norm(&g);
    g.map(|z| z / norm)
}

pub fn random_unit_vector<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CVector {
    let v = CVector::from_fn(n, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        c(re, im)
    });
    let norm = v.norm();
    v / C64::from(norm)
}

/// Rank by thresholding singular values; projector singular values sit near 0 or at >= 1.
pub fn rank_above(m: &CMatrix, threshold: f64) -> usize {
    singular_values(m).iter().filter(|&&s| s > threshold).count()
}

/// Orthonormal basis (columns) of the dominant left singular subspace of dimension `rank`.
pub fn range_basis(m: &CMatrix, rank: usize) -> CMatrix {
    let n = m.nrows();
    if rank == 0 {
        return CMatrix::zeros(n, 0);
    }
    let (u, sv) = match view(m).thin_svd() {
        Ok(svd) => {
            let s = svd.S().column_vector();
            (from_faer(svd.U()), (0..s.nrows()).map(|i| s[i].re).collect::<Vec<f64>>())
        }
        Err(_) => {
            let svd = m.clone().svd(true, false);
            (svd.u.expect("left singular vectors requested"), svd.singular_values.iter().copied().collect())
        }
    };
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]));
    CMatrix::from_fn(n, rank, |i, j| u[(i, order[j])])
}

pub fn trace(m: &CMatrix) -> C64 {
    m.diagonal().iter().sum()
}

/// `v* m v`
pub fn quadratic_form(m: &CMatrix, v: &CVector) -> C64 {
    v.dotc(&(m * v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn schur_eigenvalues_of_triangular_matrix() {
        let m = CMatrix::from_row_slice(
            3,
            3,
            &[c(1.0, 0.0), c(2.0, 1.0), c(0.5, 0.0), c(0.0, 0.0), c(-1.0, 2.0), c(3.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(4.0, -1.0)],
        );
        let mut ev = eigenvalues(&m).unwrap();
        ev.sort_by(|a, b| a.re.total_cmp(&b.re));
        assert!((ev[0] - c(-1.0, 2.0)).norm() < 1e-12);
        assert!((ev[1] - c(1.0, 0.0)).norm() < 1e-12);
        assert!((ev[2] - c(4.0, -1.0)).norm() < 1e-12);
    }

    #[test]
    fn contraction_has_unit_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v = random_contraction(12, &mut rng);
        assert!((spectral_norm(&v) - 1.0).abs() < 1e-13);
    }

    #[test]
    fn eigenvalues_match_trace_and_determinant() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = random_gaussian_matrix(20, &mut rng);
        let ev = eigenvalues(&m).unwrap();
        let tr: C64 = ev.iter().sum();
        assert!((tr - trace(&m)).norm() < 1e-10 * trace(&m).norm().max(1.0));
        let det: C64 = ev.iter().product();
        let lu_det = determinant(&m);
        assert!((det - lu_det).norm() < 1e-8 * lu_det.norm());
    }
}
