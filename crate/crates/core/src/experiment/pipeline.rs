//! generate → subordination → cuts → enclosure → projections → validation →
//! basis → surgery → summability, with a report bundle per run.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::bundle::BundleWriter;
use super::config::{GapPosition, HeightSpec, InGapValue, ScenarioConfig, Stage};
use crate::basis::{certify_level, BasisReport};
use crate::error::{LabError, Result};
use crate::linalg::{eigenvalues, CMatrix, C64};
use crate::operator_lab::bands::{abs_pow, make_power_gap_bands, GapParams};
use crate::operator_lab::{
    add_ingap_eigenvalues, build_band_operator, build_subordinated_perturbation, count_subordination_violations,
    estimate_subordination, InGapAssignment, ModelOperator, Perturbation, SubordinationCertificate,
};
use crate::resolvent::{series_summability_scan, verify_enclosure, EnclosureReport, Geometry, SummabilityScan};
use crate::riesz::{projection_family, select_cuts, CutSelection, ProjectionFamily};
use crate::surgery::{strip_eigenvalue_count, StripCount};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECKS_FAILED: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

pub fn exit_code_for(err: &LabError) -> i32 {
    if err.is_config() {
        EXIT_CONFIG
    } else if err.is_numeric_guard() {
        EXIT_NUMERIC
    } else {
        EXIT_CHECKS_FAILED
    }
}

/// Generated operators with their subordination data and geometry.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub t: ModelOperator,
    pub perturbation: Perturbation,
    pub a: CMatrix,
    pub eigenvalues_a: Vec<C64>,
    /// Sampled lower bound used as `b_est`.
    pub estimate: SubordinationCertificate,
    pub audit_violations: usize,
    pub audit_samples: usize,
    pub geometry: Geometry,
}

pub fn build_operator(cfg: &ScenarioConfig, points_per_band: usize) -> Result<ModelOperator> {
    let bc = &cfg.bands;
    let bands = make_power_gap_bands(bc.p, bc.b1, bc.band_length, bc.count, bc.origin, bc.two_sided)?;
    let t = build_band_operator(&bands, points_per_band, &bc.placement, bc.seed)?;
    if cfg.in_gap.assignments.is_empty() {
        return Ok(t);
    }
    let assignments = cfg
        .in_gap
        .assignments
        .iter()
        .map(|e| {
            let value = match e.value {
                InGapValue::At(v) => v,
                InGapValue::Position(GapPosition::Center) => t
                    .bands
                    .gap(e.gap)
                    .ok_or_else(|| LabError::Config(format!("in-gap assignment names missing gap {}", e.gap)))?
                    .midpoint(),
            };
            Ok(InGapAssignment { gap: e.gap, value, multiplicity: e.multiplicity })
        })
        .collect::<Result<Vec<_>>>()?;
    add_ingap_eigenvalues(&t, &assignments, cfg.in_gap.m)
}

pub fn resolve_geometry(cfg: &ScenarioConfig, b_est: f64) -> Result<Geometry> {
    let g = &cfg.geometry;
    let h = match g.h {
        HeightSpec::Offset(off) => b_est + off,
        HeightSpec::Absolute(h) => h,
    };
    GapParams { p: cfg.bands.p, b1: cfg.bands.b1, b_prime: b_est, delta: g.delta }.validate()?;
    let geometry = Geometry { p: cfg.bands.p, b1: cfg.bands.b1, b_est, h, delta: g.delta, tol_asym: g.tol_asym };
    geometry.validate()?;
    Ok(geometry)
}

pub fn generate(cfg: &ScenarioConfig, points_per_band: usize) -> Result<(ModelOperator, Perturbation)> {
    let t = build_operator(cfg, points_per_band)?;
    let pc = &cfg.perturbation;
    let pert = build_subordinated_perturbation(&t, cfg.bands.p, pc.b, &pc.kind, pc.seed)?;
    Ok((t, pert))
}

pub fn subordinate(cfg: &ScenarioConfig, t: ModelOperator, perturbation: Perturbation) -> Result<Scenario> {
    let pc = &cfg.perturbation;
    let p = cfg.bands.p;
    let estimate = estimate_subordination(&t, &perturbation.matrix, p, pc.trials, pc.seed, pc.ascent_steps)?;
    let audit_violations =
        count_subordination_violations(&t, &perturbation.matrix, p, pc.b, 0.0, pc.audit_samples, pc.audit_seed);
    let geometry = resolve_geometry(cfg, estimate.b_est)?;
    let a = t.matrix() + &perturbation.matrix;
    let eigenvalues_a = eigenvalues(&a)?;
    Ok(Scenario { t, perturbation, a, eigenvalues_a, estimate, audit_violations, audit_samples: pc.audit_samples, geometry })
}

pub fn build_scenario(cfg: &ScenarioConfig, points_per_band: usize) -> Result<Scenario> {
    let (t, pert) = generate(cfg, points_per_band)?;
    subordinate(cfg, t, pert)
}

pub fn cuts_for(cfg: &ScenarioConfig, s: &Scenario) -> Result<CutSelection> {
    select_cuts(&s.t, &s.perturbation.matrix, &s.eigenvalues_a, &s.geometry, &cfg.cut_config())
}

pub fn family_for(cfg: &ScenarioConfig, s: &Scenario, sel: &CutSelection) -> Result<ProjectionFamily> {
    projection_family(&s.a, &s.eigenvalues_a, &s.geometry, sel, &cfg.quadrature)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummabilityReport {
    pub base: SummabilityScan,
    pub doubled: SummabilityScan,
    /// Largest relative change of any partial sum under node doubling.
    pub doubling_change: f64,
    /// Segment integrals decrease strictly from `j = 2` on.
    pub increments_decrease: bool,
}

pub fn summability_for(cfg: &ScenarioConfig, s: &Scenario, sel: Option<&CutSelection>) -> Result<SummabilityReport> {
    let sc = &cfg.summability;
    let abscissas = (1..=sc.k_max as i64)
        .map(|j| {
            if let Some(cut) = sel.and_then(|sel| sel.cut(j)) {
                return Ok(cut.r_prime);
            }
            s.t.bands
                .gap(j)
                .map(|g| g.midpoint())
                .ok_or_else(|| LabError::Config(format!("summability.k_max = {} exceeds the gap count", sc.k_max)))
        })
        .collect::<Result<Vec<f64>>>()?;
    let x = sc.vector.build(&s.t);
    let b = &s.perturbation.matrix;
    let base = series_summability_scan(&s.t, b, &x, &s.geometry, &abscissas, sc.nodes)?;
    let doubled = series_summability_scan(&s.t, b, &x, &s.geometry, &abscissas, 2 * sc.nodes)?;
    let rel = |a: &[f64], b: &[f64]| {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs() / x.abs().max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max)
    };
    let doubling_change = rel(&base.segment_partial_sums, &doubled.segment_partial_sums)
        .max(rel(&base.curve_partial_sums, &doubled.curve_partial_sums));
    let inc = &base.segment_integrals;
    let increments_decrease = inc.len() >= 2 && (2..inc.len()).all(|j| inc[j] < inc[j - 1]);
    Ok(SummabilityReport { base, doubled, doubling_change, increments_decrease })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub stage: Stage,
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub limit: f64,
}

fn check(stage: Stage, name: &str, value: f64, limit: f64, passed: bool) -> Check {
    Check { stage, name: name.to_string(), passed, value, limit }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub stage: Stage,
    pub kind: String,
    pub message: String,
    pub exit_code: i32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurgeryRecord {
    pub surgery: crate::surgery::GapSurgery,
    pub strip_count: StripCount,
    pub bound: f64,
}

/// Everything a run produced, kept in memory for callers that inspect results.
#[derive(Default)]
pub struct RunResults {
    pub scenario: Option<Scenario>,
    pub selection: Option<CutSelection>,
    pub enclosure: Option<EnclosureReport>,
    pub family: Option<ProjectionFamily>,
    pub basis: Option<BasisReport>,
    pub surgery: Vec<SurgeryRecord>,
    pub summability: Option<SummabilityReport>,
}

pub struct RunSummary {
    pub exit_code: i32,
    pub checks: Vec<Check>,
    pub failure: Option<Failure>,
    pub stages: Vec<Stage>,
    pub manifest: Option<PathBuf>,
    pub results: RunResults,
}

/// Stages needed to produce `requested`, in pipeline order.
pub fn plan(requested: &[Stage]) -> Vec<Stage> {
    let mut set: BTreeSet<Stage> = requested.iter().copied().collect();
    set.insert(Stage::Generate);
    set.insert(Stage::Subordination);
    if set.contains(&Stage::Basis) {
        set.insert(Stage::Validation);
    }
    if set.contains(&Stage::Validation) {
        set.insert(Stage::Projections);
    }
    if set.contains(&Stage::Projections) {
        set.insert(Stage::Enclosure);
    }
    if set.iter().any(|s| *s > Stage::Cuts) {
        set.insert(Stage::Cuts);
    }
    set.into_iter().collect()
}

fn projector_name(index: i64) -> String {
    if index < 0 {
        format!("projectors/q_m{}.mtx", -index)
    } else {
        format!("projectors/q_{index}.mtx")
    }
}

struct Runner<'a> {
    cfg: &'a ScenarioConfig,
    out: BundleWriter,
    checks: Vec<Check>,
    results: RunResults,
}

impl Runner<'_> {
    fn stage(&mut self, stage: Stage) -> Result<()> {
        let cfg = self.cfg;
        match stage {
            Stage::Generate => {
                let (t, pert) = generate(cfg, cfg.bands.points_per_band)?;
                self.out.write_bytes("bands.json", t.bands.to_json()?.as_bytes())?;
                self.out.write_matrix("t.mtx", &t.matrix())?;
                self.out.write_matrix("b.mtx", &pert.matrix)?;
                self.out.write_bytes("generator_certificate.json", pert.certificate.to_json()?.as_bytes())?;
                let s = Scenario {
                    a: CMatrix::zeros(0, 0),
                    eigenvalues_a: vec![],
                    estimate: pert.certificate.clone(),
                    audit_violations: 0,
                    audit_samples: 0,
                    geometry: Geometry { p: 0.0, b1: 1.0, b_est: 0.0, h: 1.0, delta: 0.5, tol_asym: 0.0 },
                    t,
                    perturbation: pert,
                };
                self.results.scenario = Some(s);
            }
            Stage::Subordination => {
                let s = self.results.scenario.take().expect("generated");
                let s = subordinate(cfg, s.t, s.perturbation)?;
                self.out.write_bytes("certificate.json", s.estimate.to_json()?.as_bytes())?;
                self.out.write_json("geometry.json", &s.geometry)?;
                self.checks.push(check(
                    stage,
                    "subordination audit violations",
                    s.audit_violations as f64,
                    0.0,
                    s.audit_violations == 0,
                ));
                self.results.scenario = Some(s);
            }
            Stage::Cuts => {
                let s = self.results.scenario.as_ref().expect("scenario");
                let sel = cuts_for(cfg, s)?;
                self.checks.push(check(stage, "asymptotic regime reached", sel.n_index as f64, 0.0, sel.asymptotic));
                let worst = sel.asymptotic_scans().map(|p| p.max_s_norm).fold(0.0, f64::max);
                let bound = s.geometry.line_bound();
                self.checks.push(check(stage, "line bound beyond N", worst, bound, worst <= bound));
                let m_ok = sel.asymptotic_scans().all(|p| p.m_within_bound && p.neumann_holds);
                self.checks.push(check(stage, "inverse bound beyond N", if m_ok { 0.0 } else { 1.0 }, 0.0, m_ok));
                self.out.write_with("scans.csv", |buf| {
                    for (i, p) in sel.scans.iter().enumerate() {
                        let mut part = Vec::new();
                        p.write_csv(&mut part)?;
                        let text = String::from_utf8(part).expect("ascii");
                        let body = if i == 0 { text.as_str() } else { text.split_once('\n').map_or("", |x| x.1) };
                        buf.extend_from_slice(body.as_bytes());
                    }
                    Ok(())
                })?;
                self.out.write_json("cuts.json", &sel)?;
                self.results.selection = Some(sel);
            }
            Stage::Enclosure => {
                let s = self.results.scenario.as_ref().expect("scenario");
                let sel = self.results.selection.as_ref().expect("cuts");
                let rep = verify_enclosure(
                    &s.t,
                    &s.perturbation.matrix,
                    &s.eigenvalues_a,
                    &s.geometry,
                    Some(&sel.rectangle),
                    cfg.geometry.epsilon,
                )?;
                self.checks.push(check(stage, "enclosure violations", rep.violations as f64, 0.0, rep.violations == 0));
                if let Some(v) = rep.epsilon_violations {
                    self.checks.push(check(stage, "epsilon-neighborhood violations", v as f64, 0.0, v == 0));
                }
                self.out.write_json("enclosure.json", &rep)?;
                self.out.write_with("enclosure.csv", |buf| rep.write_csv(buf))?;
                self.results.enclosure = Some(rep);
            }
            Stage::Projections => {
                let s = self.results.scenario.as_ref().expect("scenario");
                let sel = self.results.selection.as_ref().expect("cuts");
                let fam = family_for(cfg, s, sel)?;
                for (q, info) in fam.projectors.iter().zip(&fam.info) {
                    self.out.write_matrix(&projector_name(info.index), q)?;
                }
                let worst = fam.info.iter().map(|i| i.quad_delta).fold(0.0, f64::max);
                self.checks.push(check(stage, "quadrature doubling change", worst, cfg.quadrature.tol, worst < cfg.quadrature.tol));
                self.results.family = Some(fam);
            }
            Stage::Validation => {
                let fam = self.results.family.as_ref().expect("family");
                let r = &fam.residuals;
                let tol = cfg.checks.residual_tol;
                self.checks.push(check(stage, "idempotency", r.idempotency_max, tol, r.idempotency_max < tol));
                self.checks.push(check(stage, "minimality", r.minimality_max, tol, r.minimality_max < tol));
                self.checks.push(check(stage, "completeness", r.completeness, tol, r.completeness < tol));
                let ttol = cfg.checks.trace_tol;
                self.checks.push(check(stage, "trace vs enclosed count", r.trace_count_max, ttol, r.trace_count_max < ttol));
                let dim_err = (r.trace_sum - fam.dimension() as f64).abs();
                self.checks.push(check(stage, "trace sum vs dimension", dim_err, ttol, dim_err < ttol));
                self.out.write_json(
                    "family.json",
                    &serde_json::json!({
                        "N": fam.n_index,
                        "cuts": fam.cuts,
                        "projectors": fam.info,
                        "residuals": fam.residuals,
                    }),
                )?;
            }
            Stage::Basis => {
                let bc = cfg.basis.certifier();
                let mut levels = Vec::new();
                for &ppb in &cfg.basis.refinement {
                    let label = format!("points_per_band={ppb}");
                    let level = if ppb == cfg.bands.points_per_band {
                        certify_level(&label, &self.results.family.as_ref().expect("family").projectors, &bc)?
                    } else {
                        let s = build_scenario(cfg, ppb)?;
                        let sel = cuts_for(cfg, &s)?;
                        let fam = family_for(cfg, &s, &sel)?;
                        certify_level(&label, &fam.projectors, &bc)?
                    };
                    levels.push(level);
                }
                let rep = BasisReport::from_levels(levels);
                self.out.write_json("basis.json", &rep)?;
                self.results.basis = Some(rep);
            }
            Stage::Surgery => {
                let s = self.results.scenario.as_ref().expect("scenario");
                let sel = self.results.selection.as_ref().expect("cuts");
                let mut records = Vec::new();
                for surgery in &sel.surgeries {
                    let bound = cfg.bands.b1 * abs_pow(surgery.r, cfg.bands.p);
                    self.checks.push(check(
                        stage,
                        &format!("displacement norm, gap {}", surgery.gap),
                        surgery.k_norm,
                        bound,
                        surgery.k_norm <= bound * (1.0 + 1e-12),
                    ));
                    let strip_count = strip_eigenvalue_count(&s.eigenvalues_a, surgery.gap, surgery.r, &s.geometry, cfg.in_gap.m);
                    records.push(SurgeryRecord { surgery: surgery.clone(), strip_count, bound });
                }
                for prof in &sel.profiles {
                    self.out.write_with(&format!("surgery/determinant_gap_{}.csv", prof.gap), |buf| prof.write_csv(buf))?;
                }
                self.out.write_json("surgery/surgeries.json", &records)?;
                self.results.surgery = records;
            }
            Stage::Summability => {
                let s = self.results.scenario.as_ref().expect("scenario");
                let rep = summability_for(cfg, s, self.results.selection.as_ref())?;
                self.out.write_json("summability.json", &rep)?;
                self.results.summability = Some(rep);
            }
        }
        Ok(())
    }
}

fn failure_for(stage: Stage, err: &LabError) -> Failure {
    let kind = if err.is_config() {
        "config"
    } else if err.is_numeric_guard() {
        "numeric-guard"
    } else {
        "error"
    };
    Failure { stage, kind: kind.into(), message: err.to_string(), exit_code: exit_code_for(err) }
}

/// Runs the stages needed for `requested` and writes the bundle to `out`.
pub fn run_scenario(cfg: &ScenarioConfig, requested: &[Stage], out: &Path) -> Result<RunSummary> {
    let stages = plan(requested);
    let mut runner = Runner { cfg, out: BundleWriter::create(out)?, checks: Vec::new(), results: RunResults::default() };
    runner.out.write_bytes("config.json", format!("{}\n", cfg.to_json()?).as_bytes())?;
    let mut failure = None;
    let mut done = Vec::new();
    for &stage in &stages {
        if let Err(err) = runner.stage(stage) {
            failure = Some(failure_for(stage, &err));
            break;
        }
        done.push(stage);
    }
    if failure.is_none() {
        if let Some(c) = runner.checks.iter().find(|c| !c.passed) {
            failure = Some(Failure {
                stage: c.stage,
                kind: "check".into(),
                message: format!("check '{}' failed: {} vs limit {}", c.name, c.value, c.limit),
                exit_code: EXIT_CHECKS_FAILED,
            });
        }
    }
    let exit_code = failure.as_ref().map_or(EXIT_OK, |f| f.exit_code);
    let Runner { out, checks, results, .. } = runner;
    let sel = results.selection.as_ref();
    let meta = serde_json::json!({
        "schema": "bundle.v1",
        "name": cfg.name,
        "version": env!("CARGO_PKG_VERSION"),
        "config_sha256": cfg.sha256()?,
        "config": cfg,
        "seeds": cfg.seeds(),
        "stages": done,
        "N": sel.map(|s| s.n_index),
        "cuts": sel.map(|s| s.cuts.iter().map(|c| serde_json::json!({"gap": c.gap, "r": c.r, "r_prime": c.r_prime, "surgered": c.surgered})).collect::<Vec<_>>()),
        "b_est": results.scenario.as_ref().map(|s| s.estimate.b_est),
        "checks": checks,
        "exit_code": exit_code,
        "failure": failure,
    });
    let dir = out.dir().to_path_buf();
    let manifest = out.finish(meta)?;
    if let Some(f) = &failure {
        let mut text = serde_json::to_string_pretty(f)?;
        text.push('\n');
        std::fs::write(dir.join("failure.json"), text)?;
    }
    Ok(RunSummary { exit_code, checks, failure, stages: done, manifest: Some(manifest), results })
}
