use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("read voltage {voltage} V reaches the switching threshold {threshold} V")]
    AboveThreshold { voltage: f64, threshold: f64 },

    #[error("pulse amplitude {amplitude} V outside programming range [{min}, {max}] V")]
    AmplitudeOutOfRange { amplitude: f64, min: f64, max: f64 },

    #[error("target resistance {target} ohm outside device range [{min}, {max}] ohm")]
    TargetOutOfRange { target: f64, min: f64, max: f64 },

    #[error("device stuck at {stuck} ohm cannot reach {target} ohm")]
    StuckDevice { stuck: f64, target: f64 },

    #[error("programming to {target} ohm failed after {attempts} SET cycles (last read {last} ohm)")]
    ProgrammingFailed { target: f64, attempts: usize, last: f64 },

    #[error("input {index} = {value} V exceeds the data range of +/-{limit} V")]
    InputOverrange { index: usize, value: f64, limit: f64 },

    #[error("crossbar has {0} rows; differential pairs need an even count")]
    OddRowCount(usize),

    #[error("bias map puts {drop} V across non-target cell ({row}, {col}); limit is {limit} V")]
    BiasViolation { row: usize, col: usize, drop: f64, limit: f64 },

    #[error("cell ({row}, {col}) outside {rows}x{cols} crossbar")]
    CellOutOfBounds { row: usize, col: usize, rows: usize, cols: usize },

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("weight {weight} exceeds the realizable range +/-{w_max}")]
    WeightOutOfRange { weight: f64, w_max: f64 },

    #[error("loss became non-finite at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("no tolerance point passes: nominal P_err {nominal}% is above X_p {x_p}%")]
    NoPassingPoint { nominal: f64, x_p: f64 },

    #[error("class counts do not match: {0}")]
    CountMismatch(String),

    #[error("missing artifact: {}", .0.display())]
    MissingArtifact(PathBuf),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
