use std::path::PathBuf;

use crate::domain::Advisory;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("closure rate must be positive, got {0} ft/s")]
    NonPositiveClosureRate(f64),

    #[error("advisory {advisory} is not allowed after {prev}")]
    DisallowedAdvisory { prev: Advisory, advisory: Advisory },

    #[error("{0} has no nominal trajectory")]
    NoNominalTrajectory(Advisory),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid response model: {0}")]
    InvalidModel(String),

    #[error("state outside the table bounding box: {0}")]
    OutOfBounds(String),

    #[error("non-finite value {value} at tau layer {tau}, state index {index}")]
    NonFiniteValue { tau: usize, index: usize, value: f64 },

    #[error("malformed table file: {0}")]
    TableFormat(String),

    #[error("network input is not finite: {0:?}")]
    NonFiniteInput(Vec<f64>),

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("network file line {line}: {message}")]
    NetworkParse { line: usize, message: String },

    #[error("layer {layer}: {message}")]
    NetworkStructure { layer: usize, message: String },

    #[error("training diverged at epoch {epoch} (loss {loss})")]
    TrainingDiverged { epoch: usize, loss: f64 },

    #[error("invalid training config: {0}")]
    InvalidTrainConfig(String),

    #[error("invalid velocity interval [{lo}, {hi}]")]
    InvalidInterval { lo: f64, hi: f64 },

    #[error("invalid query: {0}")]
    InvalidQuery(String),

    #[error("numerical inconclusive: {0}")]
    NumericalInconclusive(String),

    #[error("simplex cycling guard tripped after {0} pivots")]
    CyclingGuard(usize),

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("missing network for previous advisory {0}")]
    MissingNetwork(Advisory),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("{path}: {cause}")]
    Io { path: PathBuf, cause: std::io::Error },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, cause: std::io::Error) -> Self {
        Error::Io { path: path.into(), cause }
    }

    /// Create the parent directory of an output file.
    pub(crate) fn ensure_parent(path: &std::path::Path) -> Result<()> {
        match path.parent() {
            Some(dir) if !dir.as_os_str().is_empty() => std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e)),
            _ => Ok(()),
        }
    }
}
