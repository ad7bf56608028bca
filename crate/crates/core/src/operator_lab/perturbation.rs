//! p-subordinated perturbations `‖Bx‖ ≤ b‖Tx‖^p‖x‖^{1-p} + M‖x‖`.

use std::sync::OnceLock;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::ModelOperator;
use crate::error::{LabError, Result};
use crate::linalg::{random_contraction, random_unit_vector, CMatrix, CVector, C64};
use crate::registry::{Named, Registry};

/// Whether `b_est` is guaranteed by construction or sampled from below.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundKind {
    /// Admissible constant known analytically (an upper bound for b').
    AnalyticUpper,
    /// Maximum of sampled ratios (a lower bound for the optimal b with M = 0).
    SampledLower,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubordinationCertificate {
    pub p: f64,
    pub b_est: f64,
    #[serde(rename = "M")]
    pub shift: f64,
    pub trials: usize,
    pub seed: u64,
    pub ascent_steps: usize,
    pub bound: BoundKind,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "schema")]
enum CertificateDocument {
    #[serde(rename = "cert.v1")]
    V1(SubordinationCertificate),
}

impl SubordinationCertificate {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&CertificateDocument::V1(self.clone()))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let CertificateDocument::V1(cert) = serde_json::from_str(text)?;
        if cert.b_est < 0.0 || cert.shift < 0.0 || (cert.p == 0.0 && cert.shift != 0.0) {
            return Err(LabError::InvalidParameter(
                "certificate needs b_est >= 0, M >= 0 and M = 0 when p = 0".into(),
            ));
        }
        Ok(cert)
    }
}

#[derive(Clone, Debug)]
pub struct Perturbation {
    pub matrix: CMatrix,
    pub kind: String,
    pub certificate: SubordinationCertificate,
}

/// Recipe for a perturbation that is p-subordinated by construction.
pub trait PerturbationKind: Named + Send + Sync {
    fn build(&self, t: &ModelOperator, p: f64, b: f64, rng: &mut dyn RngCore) -> Result<CMatrix>;
}

/// `B = b V |T|^p` with `‖V‖ = 1`.
pub struct ContractionTimesPower;

impl Named for ContractionTimesPower {
    fn name(&self) -> &'static str {
        "contraction-times-power"
    }
}

impl PerturbationKind for ContractionTimesPower {
    fn build(&self, t: &ModelOperator, p: f64, b: f64, rng: &mut dyn RngCore) -> Result<CMatrix> {
        if p > 0.0 && t.eigenvalues.iter().any(|&x| x == 0.0) {
            return Err(LabError::InvalidParameter(
                "T has a zero eigenvalue; |T|^p perturbations require an invertible T".into(),
            ));
        }
        let v = random_contraction(t.dimension(), rng);
        Ok(scaled_contraction(t, p, b, &v))
    }
}

/// `B = b V` with `‖V‖ = 1`; only meaningful for `p = 0`.
pub struct Bounded;

impl Named for Bounded {
    fn name(&self) -> &'static str {
        "bounded"
    }
}

impl PerturbationKind for Bounded {
    fn build(&self, t: &ModelOperator, p: f64, b: f64, rng: &mut dyn RngCore) -> Result<CMatrix> {
        if p != 0.0 {
            return Err(LabError::InvalidParameter(format!(
                "bounded perturbations are 0-subordinated; got p = {p}"
            )));
        }
        let v = random_contraction(t.dimension(), rng);
        Ok(v.map(|z| z * b))
    }
}

pub fn perturbation_kinds() -> &'static Registry<dyn PerturbationKind> {
    static REG: OnceLock<Registry<dyn PerturbationKind>> = OnceLock::new();
    REG.get_or_init(|| {
        let mut reg: Registry<dyn PerturbationKind> = Registry::new("perturbation kind");
        reg.register(Box::new(ContractionTimesPower)).register(Box::new(Bounded));
        reg
    })
}

/// `b V |T|^p` for an explicit contraction `V`.
pub fn scaled_contraction(t: &ModelOperator, p: f64, b: f64, v: &CMatrix) -> CMatrix {
    (v * t.abs_power(p)).map(|z| z * b)
}

pub fn build_subordinated_perturbation(
    t: &ModelOperator,
    p: f64,
    b: f64,
    kind: &str,
    seed: u64,
) -> Result<Perturbation> {
    if !(0.0..1.0).contains(&p) {
        return Err(LabError::InvalidParameter(format!("p = {p} outside [0, 1)")));
    }
    if !(b >= 0.0) || !b.is_finite() {
        return Err(LabError::InvalidParameter("b must be nonnegative and finite".into()));
    }
    let strategy = perturbation_kinds().get(kind)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let matrix = strategy.build(t, p, b, &mut rng)?;
    Ok(Perturbation {
        matrix,
        kind: kind.to_string(),
        certificate: SubordinationCertificate {
            p,
            b_est: b,
            shift: 0.0,
            trials: 0,
            seed,
            ascent_steps: 0,
            bound: BoundKind::AnalyticUpper,
        },
    })
}

/// Subordination ratio `‖Bx‖ / (‖Tx‖^p ‖x‖^{1-p})`; `None` when `Tx = 0` and `p > 0`.
fn ratio(bx: f64, tx: f64, x: f64, p: f64) -> Option<f64> {
    if p > 0.0 && tx == 0.0 {
        return None;
    }
    let denom = tx.powf(p) * x.powf(1.0 - p);
    (denom > 0.0).then(|| bx / denom)
}

struct AscentData {
    b: CMatrix,
    bb: CMatrix,
    tm: CMatrix,
    tt: CMatrix,
    p: f64,
}

impl AscentData {
    fn value(&self, x: &CVector) -> Option<f64> {
        ratio((&self.b * x).norm(), (&self.tm * x).norm(), x.norm(), self.p)
    }

    /// Normalized gradient ascent on `log ratio`, accepting only improving steps.
    fn refine(&self, start: CVector, steps: usize) -> f64 {
        let mut x = start;
        let Some(mut best) = self.value(&x) else {
            return 0.0;
        };
        let mut eta = 0.5;
        for _ in 0..steps {
            let bx2 = (&self.b * &x).norm_squared();
            let tx2 = (&self.tm * &x).norm_squared();
            if bx2 == 0.0 || (self.p > 0.0 && tx2 == 0.0) {
                break;
            }
            let mut g = (&self.bb * &x).map(|z| z / bx2) - x.map(|z| z * (1.0 - self.p) / x.norm_squared());
            if self.p > 0.0 {
                g -= (&self.tt * &x).map(|z| z * self.p / tx2);
            }
            let gn = g.norm();
            if gn == 0.0 || !gn.is_finite() {
                break;
            }
            let dir = g / C64::from(gn);
            let mut improved = false;
            for _ in 0..30 {
                let cand = &x + dir.map(|z| z * eta);
                let cand = &cand / C64::from(cand.norm());
                if let Some(v) = self.value(&cand) {
                    if v > best {
                        best = v;
                        x = cand;
                        eta = (eta * 1.5).min(1.0);
                        improved = true;
                        break;
                    }
                }
                eta *= 0.5;
            }
            if !improved {
                break;
            }
        }
        best
    }
}

/// Certified lower bound for the optimal `b` (with `M = 0`) by deterministic multistart:
/// every eigenvector of `T`, then `trials` seeded random directions, each refined
/// by `ascent_steps` steps of normalized gradient ascent.
pub fn estimate_subordination(
    t: &ModelOperator,
    b: &CMatrix,
    p: f64,
    trials: usize,
    seed: u64,
    ascent_steps: usize,
) -> Result<SubordinationCertificate> {
    if trials == 0 {
        return Err(LabError::InvalidParameter("trials must be at least 1".into()));
    }
    let n = t.dimension();
    if b.nrows() != n || b.ncols() != n {
        return Err(LabError::DimensionMismatch { expected: n, found: b.nrows() });
    }
    let tm = t.matrix();
    let data = AscentData {
        bb: b.adjoint() * b,
        tt: tm.adjoint() * &tm,
        b: b.clone(),
        tm,
        p,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut starts: Vec<CVector> = (0..n).map(|j| t.eigenvectors.column(j).into_owned()).collect();
    starts.extend((0..trials).map(|_| random_unit_vector(n, &mut rng)));

    let b_est = starts
        .into_par_iter()
        .map(|x| data.refine(x, ascent_steps))
        .reduce(|| 0.0, f64::max);

    Ok(SubordinationCertificate {
        p,
        b_est,
        shift: 0.0,
        trials,
        seed,
        ascent_steps,
        bound: BoundKind::SampledLower,
    })
}

/// Count of sampled unit vectors violating `‖Bx‖ ≤ b‖Tx‖^p‖x‖^{1-p} + M‖x‖`
/// beyond rounding slack.
pub fn count_subordination_violations(
    t: &ModelOperator,
    b: &CMatrix,
    p: f64,
    bound: f64,
    shift: f64,
    samples: usize,
    seed: u64,
) -> usize {
    let tm = t.matrix();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xs: Vec<CVector> = (0..samples).map(|_| random_unit_vector(t.dimension(), &mut rng)).collect();
    xs.par_iter()
        .filter(|x| {
            let lhs = (b * *x).norm();
            let tx = (&tm * *x).norm();
            let rhs = bound * tx.powf(p) * x.norm().powf(1.0 - p) + shift * x.norm();
            lhs > rhs * (1.0 + 1e-12) + 1e-14
        })
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, spectral_norm};
    use crate::operator_lab::bands::{make_power_gap_bands, BandSpec};
    use crate::operator_lab::model::build_band_operator;

    fn diag_operator(values: &[f64]) -> ModelOperator {
        let n = values.len();
        ModelOperator {
            eigenvalues: values.to_vec(),
            eigenvectors: CMatrix::identity(n, n),
            tags: vec![crate::operator_lab::model::SpectralTag::Band(1); n],
            bands: BandSpec::from_bands(&[(0.0, 100.0)]).unwrap(),
        }
    }

    #[test]
    fn bounded_kind_has_exact_norm() {
        let spec = make_power_gap_bands(0.0, 1.0, 1.0, 4, 1.0, false).unwrap();
        let t = build_band_operator(&spec, 4, "uniform-grid", 0).unwrap();
        let pert = build_subordinated_perturbation(&t, 0.0, 0.8, "bounded", 9).unwrap();
        assert!((spectral_norm(&pert.matrix) - 0.8).abs() < 1e-13);
        assert_eq!(pert.certificate.shift, 0.0);
        assert!(build_subordinated_perturbation(&t, 0.5, 0.8, "bounded", 9).is_err());
    }

    #[test]
    fn functional_calculus_with_identity_contraction() {
        let t = diag_operator(&[1.0, 4.0]);
        let b = scaled_contraction(&t, 0.5, 0.5, &CMatrix::identity(2, 2));
        assert!((b[(0, 0)] - c(0.5, 0.0)).norm() < 1e-15);
        assert!((b[(1, 1)] - c(1.0, 0.0)).norm() < 1e-15);
        assert_eq!(b[(0, 1)], c(0.0, 0.0));
    }

    #[test]
    fn rejects_p_at_least_one() {
        let t = diag_operator(&[1.0, 4.0]);
        assert!(build_subordinated_perturbation(&t, 1.0, 0.5, "contraction-times-power", 0).is_err());
    }

    #[test]
    fn generated_perturbations_satisfy_the_bound() {
        let spec = make_power_gap_bands(0.5, 1.0, 1.0, 4, 1.0, false).unwrap();
        let t = build_band_operator(&spec, 6, "jittered-grid", 2).unwrap();
        let pert = build_subordinated_perturbation(&t, 0.5, 0.5, "contraction-times-power", 4).unwrap();
        let violations = count_subordination_violations(&t, &pert.matrix, 0.5, 0.5, 0.0, 10_000, 17);
        assert_eq!(violations, 0);
    }

    #[test]
    fn estimate_on_known_cases() {
        let t = diag_operator(&[1.0, 4.0]);
        let zero = CMatrix::zeros(2, 2);
        assert_eq!(estimate_subordination(&t, &zero, 0.5, 8, 1, 50).unwrap().b_est, 0.0);

        let b = scaled_contraction(&t, 0.5, 0.5, &CMatrix::identity(2, 2));
        let cert = estimate_subordination(&t, &b, 0.5, 8, 1, 50).unwrap();
        assert!((cert.b_est - 0.5).abs() < 1e-10);
        assert_eq!(cert.bound, BoundKind::SampledLower);

        let doubled = estimate_subordination(&t, &b.map(|z| z * 2.0), 0.5, 8, 1, 50).unwrap();
        assert_eq!(doubled.b_est, 2.0 * cert.b_est);
    }

    #[test]
    fn estimate_is_a_lower_bound_and_monotone_in_trials() {
        let spec = make_power_gap_bands(0.5, 1.0, 1.0, 3, 1.0, false).unwrap();
        let t = build_band_operator(&spec, 5, "uniform-grid", 0).unwrap();
        let pert = build_subordinated_perturbation(&t, 0.5, 0.5, "contraction-times-power", 3).unwrap();
        let mut last = 0.0;
        for trials in [4, 8, 16, 32] {
            let cert = estimate_subordination(&t, &pert.matrix, 0.5, trials, 5, 50).unwrap();
            assert!(cert.b_est >= last);
            assert!(cert.b_est <= 0.5 * (1.0 + 1e-12));
            last = cert.b_est;
        }
    }

    #[test]
    fn bounded_estimate_reaches_the_norm() {
        let spec = make_power_gap_bands(0.0, 1.0, 1.0, 3, 1.0, false).unwrap();
        let t = build_band_operator(&spec, 6, "uniform-grid", 0).unwrap();
        let pert = build_subordinated_perturbation(&t, 0.0, 0.8, "bounded", 3).unwrap();
        let cert = estimate_subordination(&t, &pert.matrix, 0.0, 16, 5, 50).unwrap();
        assert!(cert.b_est <= 0.8 + 1e-12);
        assert!(cert.b_est > 0.79, "ascent should approach ‖B‖, got {}", cert.b_est);
    }

    #[test]
    fn certificate_json_schema() {
        let cert = SubordinationCertificate {
            p: 0.0,
            b_est: 0.7,
            shift: 0.0,
            trials: 4,
            seed: 1,
            ascent_steps: 50,
            bound: BoundKind::SampledLower,
        };
        let text = cert.to_json().unwrap();
        assert!(text.contains("\"schema\": \"cert.v1\""));
        assert!(text.contains("\"M\": 0.0"));
        assert_eq!(SubordinationCertificate::from_json(&text).unwrap(), cert);
        let bad = text.replace("\"M\": 0.0", "\"M\": 1.0");
        assert!(SubordinationCertificate::from_json(&bad).is_err());
    }
}
