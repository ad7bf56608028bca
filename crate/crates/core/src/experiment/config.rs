//! Scenario configuration files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::basis::BasisConfig;
use crate::error::{LabError, Result};
use crate::operator_lab::bands::GapParams;
use crate::operator_lab::{perturbation_kinds, placements};
use crate::quadrature::quadrature_rules;
use crate::resolvent::TestVector;
use crate::riesz::{CutConfig, QuadratureConfig};
use crate::surgery::GridSpec;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandConfig {
    pub p: f64,
    pub b1: f64,
    pub band_length: f64,
    pub count: usize,
    pub origin: f64,
    pub two_sided: bool,
    pub points_per_band: usize,
    pub placement: String,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationConfig {
    pub kind: String,
    pub b: f64,
    pub seed: u64,
    /// Random starts for the subordination estimate.
    pub trials: usize,
    pub ascent_steps: usize,
    /// Unit vectors sampled when auditing the generator bound.
    pub audit_samples: usize,
    pub audit_seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GapPosition {
    Center,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InGapValue {
    At(f64),
    Position(GapPosition),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InGapEntry {
    pub gap: i64,
    pub value: InGapValue,
    pub multiplicity: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InGapConfig {
    pub m: usize,
    pub assignments: Vec<InGapEntry>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum HeightSpec {
    /// `h = b_est + offset`
    Offset(f64),
    Absolute(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub h: HeightSpec,
    pub delta: f64,
    pub tol_asym: f64,
    /// Radius of the Euclidean band neighborhoods checked in the enclosure report.
    pub epsilon: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckConfig {
    pub residual_tol: f64,
    pub trace_tol: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisStageConfig {
    pub exact_threshold: usize,
    pub trials: usize,
    pub random_vectors: usize,
    pub seed: u64,
    /// Points per band of every level in the refinement series.
    pub refinement: Vec<usize>,
}

impl BasisStageConfig {
    pub fn certifier(&self) -> BasisConfig {
        BasisConfig {
            exact_threshold: self.exact_threshold,
            trials: self.trials,
            random_vectors: self.random_vectors,
            seed: self.seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SummabilityConfig {
    pub k_max: usize,
    pub nodes: usize,
    pub vector: TestVector,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Generate,
    Subordination,
    Cuts,
    Enclosure,
    Projections,
    Validation,
    Basis,
    Surgery,
    Summability,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Generate => "generate",
            Stage::Subordination => "subordination",
            Stage::Cuts => "cuts",
            Stage::Enclosure => "enclosure",
            Stage::Projections => "projections",
            Stage::Validation => "validation",
            Stage::Basis => "basis",
            Stage::Surgery => "surgery",
            Stage::Summability => "summability",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub bands: BandConfig,
    pub perturbation: PerturbationConfig,
    pub in_gap: InGapConfig,
    pub geometry: GeometryConfig,
    pub cuts: CutConfig,
    pub quadrature: QuadratureConfig,
    pub checks: CheckConfig,
    pub basis: BasisStageConfig,
    pub summability: SummabilityConfig,
    pub pipeline: Vec<Stage>,
    pub output_dir: PathBuf,
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(LabError::Config(format!("{name} must be positive, got {v}")))
    }
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = serde_json::from_str(text).map_err(|e| LabError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LabError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// SHA-256 of the canonical JSON form.
    pub fn sha256(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_json()?.as_bytes())))
    }

    /// Declared-parameter checks; the δ bound is checked again once `b_est` is known.
    pub fn validate(&self) -> Result<()> {
        let b = &self.bands;
        if !(0.0..1.0).contains(&b.p) {
            return Err(LabError::Config(format!("p = {} outside [0, 1)", b.p)));
        }
        positive("bands.b1", b.b1)?;
        positive("bands.band_length", b.band_length)?;
        if b.count == 0 || b.points_per_band == 0 {
            return Err(LabError::Config("bands.count and bands.points_per_band must be positive".into()));
        }
        placements().get(&b.placement)?;
        perturbation_kinds().get(&self.perturbation.kind)?;
        quadrature_rules().get(&self.quadrature.rule)?;
        if !(self.perturbation.b >= 0.0) {
            return Err(LabError::Config("perturbation.b must be nonnegative".into()));
        }
        if self.perturbation.trials == 0 {
            return Err(LabError::Config("perturbation.trials must be positive".into()));
        }
        let g = &self.geometry;
        positive("geometry.delta", g.delta)?;
        positive("geometry.tol_asym", g.tol_asym)?;
        match g.h {
            HeightSpec::Offset(v) => positive("geometry.h.offset", v)?,
            HeightSpec::Absolute(v) => positive("geometry.h.absolute", v)?,
        }
        if let Some(eps) = g.epsilon {
            positive("geometry.epsilon", eps)?;
        }
        GapParams { p: b.p, b1: b.b1, b_prime: self.perturbation.b, delta: g.delta }.validate()?;
        positive("checks.residual_tol", self.checks.residual_tol)?;
        positive("checks.trace_tol", self.checks.trace_tol)?;
        positive("quadrature.tol", self.quadrature.tol)?;
        if self.quadrature.nodes_per_segment < 8 || self.quadrature.max_nodes < self.quadrature.nodes_per_segment {
            return Err(LabError::Config("need 8 <= quadrature.nodes_per_segment <= quadrature.max_nodes".into()));
        }
        positive("cuts.rectangle_margin", self.cuts.rectangle_margin)?;
        if self.cuts.scan_samples < 2 {
            return Err(LabError::Config("cuts.scan_samples must be at least 2".into()));
        }
        let GridSpec { lines, points_per_line } = self.cuts.grid;
        if lines == 0 || points_per_line < 2 {
            return Err(LabError::Config("cuts.grid needs lines >= 1 and points_per_line >= 2".into()));
        }
        if let Some(th) = self.cuts.threshold {
            if !(th >= 0.0) {
                return Err(LabError::Config("cuts.threshold must be nonnegative".into()));
            }
        }
        if self.basis.refinement.is_empty() || self.basis.refinement.contains(&0) {
            return Err(LabError::Config("basis.refinement needs positive point counts".into()));
        }
        if self.summability.nodes < 2 {
            return Err(LabError::Config("summability.nodes must be at least 2".into()));
        }
        if self.in_gap.assignments.iter().any(|a| a.multiplicity == 0) {
            return Err(LabError::Config("in-gap multiplicities must be positive".into()));
        }
        Ok(())
    }

    /// Replaces every seed with one derived from `seed`.
    pub fn with_seed_override(mut self, seed: u64) -> Self {
        self.bands.seed = seed;
        self.perturbation.seed = seed.wrapping_add(1);
        self.perturbation.audit_seed = seed.wrapping_add(2);
        self.basis.seed = seed.wrapping_add(3);
        self
    }

    pub fn seeds(&self) -> Seeds {
        Seeds {
            bands: self.bands.seed,
            perturbation: self.perturbation.seed,
            audit: self.perturbation.audit_seed,
            basis: self.basis.seed,
        }
    }

    pub fn cut_config(&self) -> CutConfig {
        CutConfig { m: self.in_gap.m, ..self.cuts }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub bands: u64,
    pub perturbation: u64,
    pub audit: u64,
    pub basis: u64,
}

/// Sets `path` (dot separated) in a JSON document to `value`, parsed as JSON
/// when possible and kept as a string otherwise.
pub fn apply_override(doc: &mut serde_json::Value, path: &str, value: &str) -> Result<()> {
    let parsed = serde_json::from_str(value).unwrap_or_else(|_| serde_json::Value::String(value.to_string()));
    let mut node = doc;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| LabError::Config(format!("{path}: '{part}' is not inside an object")))?;
        if i + 1 == parts.len() {
            if !obj.contains_key(*part) {
                return Err(LabError::Config(format!("{path}: unknown field '{part}'")));
            }
            obj.insert(part.to_string(), parsed);
            return Ok(());
        }
        node = obj
            .get_mut(*part)
            .ok_or_else(|| LabError::Config(format!("{path}: unknown field '{part}'")))?;
    }
    Err(LabError::Config("empty override path".into()))
}

/// `path=v1,v2,...` into its path and values.
pub fn parse_grid(spec: &str) -> Result<(String, Vec<String>)> {
    let (path, values) = spec
        .split_once('=')
        .ok_or_else(|| LabError::Config(format!("grid '{spec}' is not of the form path=v1,v2")))?;
    let values: Vec<String> = values.split(',').map(|v| v.trim().to_string()).filter(|v| !v.is_empty()).collect();
    if path.trim().is_empty() || values.is_empty() {
        return Err(LabError::Config(format!("grid '{spec}' needs a path and at least one value")));
    }
    Ok((path.trim().to_string(), values))
}
