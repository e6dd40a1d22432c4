use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{op}: shape mismatch in {dim}: expected {expected}, got {got}")]
    ShapeMismatch {
        op: &'static str,
        dim: String,
        expected: usize,
        got: usize,
    },

    #[error("{op}: {msg}")]
    InvalidArgument { op: &'static str, msg: String },

    #[error("{op}: non-finite value at flat index {index}")]
    NonFinite { op: &'static str, index: usize },

    #[error("label {label} at position {index} out of range for {classes} classes")]
    LabelOutOfRange {
        index: usize,
        label: usize,
        classes: usize,
    },

    #[error("incomposable architecture at layer {layer}: {msg}")]
    Architecture { layer: usize, msg: String },

    #[error("layer {layer}: degenerate normalizer ({msg})")]
    DegenerateNormalizer { layer: usize, msg: String },

    #[error("{what} {value} exceeds normalizer {normalizer}")]
    NormalizerExceeded {
        what: &'static str,
        value: f64,
        normalizer: f64,
    },

    #[error("calibration of layer {layer} did not converge after {iterations} bisection steps")]
    CalibrationDiverged { layer: usize, iterations: usize },

    #[error("degenerate network: {0}")]
    DegenerateNetwork(String),

    #[error("training diverged: non-finite loss at generation {generation}, epoch {epoch}")]
    TrainingDiverged { generation: u32, epoch: usize },

    #[error("{path}: {msg} (offset {offset})")]
    Idx {
        path: PathBuf,
        offset: u64,
        msg: String,
    },

    #[error("dataset: {0}")]
    Dataset(String),

    #[error("checkpoint {path}: {msg}")]
    Checkpoint { path: PathBuf, msg: String },

    #[error("report: {0}")]
    Report(String),

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(op: &'static str, dim: impl Into<String>, expected: usize, got: usize) -> Self {
        Error::ShapeMismatch {
            op,
            dim: dim.into(),
            expected,
            got,
        }
    }
}
