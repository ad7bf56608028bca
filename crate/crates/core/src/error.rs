use thiserror::Error;

/// Errors raised by the lab. Numeric guards are distinguished from
/// configuration problems so the CLI can map them to exit codes.
#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("λ within ε of spectrum at ({re}, {im}): smallest singular value {sigma_min:e}")]
    NearSpectrum { re: f64, im: f64, sigma_min: f64 },

    #[error("contour too close to spectrum: eigenvalue ({re}, {im}) at distance {distance:e}")]
    ContourTooClose { re: f64, im: f64, distance: f64 },

    #[error("quadrature not converged: {nodes} nodes per segment, last change {delta:e}")]
    QuadratureNotConverged { nodes: usize, delta: f64 },

    #[error("gap multiplicity exceeds m: gap {gap} holds {count} > {m}")]
    GapMultiplicity { gap: i64, count: usize, m: usize },

    #[error("value {value} lies outside gap {gap} ({lo}, {hi})")]
    ValueOutsideGap { gap: i64, value: f64, lo: f64, hi: f64 },

    #[error("interval ({lo}, {hi}) around abscissa {r} contains spectrum of T; run gap surgery first")]
    SpectrumInScanInterval { r: f64, lo: f64, hi: f64 },

    #[error("no clear line found in strip of gap {gap} (best min |D| = {best:e})")]
    NoClearLine { gap: i64, best: f64 },

    #[error("rank mismatch: projector ranks sum to {found}, dimension is {expected}")]
    RankMismatch { expected: usize, found: usize },

    #[error("decomposition failed: {0}")]
    Decomposition(String),

    #[error("unknown {family} strategy `{name}` (available: {available})")]
    UnknownStrategy {
        family: &'static str,
        name: String,
        available: String,
    },

    #[error("matrix market: {0}")]
    MatrixMarket(String),

    #[error("configuration invalid: {0}")]
    Config(String),

    #[error("projector {index}: {source}")]
    Projector {
        index: i64,
        #[source]
        source: Box<LabError>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl LabError {
    /// True for failures caused by a numeric guard tripping rather than bad input.
    pub fn is_numeric_guard(&self) -> bool {
        match self {
            LabError::NearSpectrum { .. }
            | LabError::ContourTooClose { .. }
            | LabError::QuadratureNotConverged { .. }
            | LabError::SpectrumInScanInterval { .. }
            | LabError::NoClearLine { .. }
            | LabError::RankMismatch { .. }
            | LabError::Decomposition(_) => true,
            LabError::Projector { source, .. } => source.is_numeric_guard(),
            _ => false,
        }
    }

    pub fn is_config(&self) -> bool {
        match self {
            LabError::Config(_)
            | LabError::InvalidParameter(_)
            | LabError::UnknownStrategy { .. }
            | LabError::GapMultiplicity { .. }
            | LabError::ValueOutsideGap { .. } => true,
            LabError::Projector { source, .. } => source.is_config(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, LabError>;
