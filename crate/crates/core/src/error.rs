use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid series: {0}")]
    InvalidSeries(String),

    #[error("window out of range: end={end} len={len} for series of {epochs} epochs")]
    WindowBounds { end: usize, len: usize, epochs: usize },

    #[error("split error: {0}")]
    Split(String),

    #[error("invalid topology: {0}")]
    InvalidTopology(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("normalization: {0}")]
    Normalization(String),

    #[error("training diverged at epoch {epoch}: {detail}")]
    NonFiniteLoss { epoch: usize, detail: String },

    #[error("training data too short: need {needed} epochs, have {have}")]
    TooShort { needed: usize, have: usize },

    #[error("window length mismatch: model expects {expected}, got {got}")]
    WindowMismatch { expected: usize, got: usize },

    #[error("node count mismatch: expected {expected}, got {got}")]
    NodeMismatch { expected: usize, got: usize },

    #[error("calibration: {0}")]
    Calibration(String),

    #[error("unknown model id `{0}`")]
    UnknownModel(String),

    #[error("empty model pool")]
    EmptyPool,

    #[error("synthetic spec: {0}")]
    Synth(String),

    #[error("linear program: {0}")]
    Lp(String),

    #[error("epoch misalignment: {0}")]
    Misaligned(String),

    #[error("at epoch {epoch}: {source}")]
    AtEpoch {
        epoch: usize,
        #[source]
        source: alloc::boxed::Box<Error>,
    },
}

impl Error {
    pub fn at_epoch(self, epoch: usize) -> Self {
        Error::AtEpoch { epoch, source: alloc::boxed::Box::new(self) }
    }
}
