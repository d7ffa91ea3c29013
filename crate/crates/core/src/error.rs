use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    Dimension {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("zero transfer function")]
    ZeroTransferFunction,

    #[error("relative degree undefined")]
    RelativeDegreeUndefined,

    #[error("no response detected")]
    NoResponse,

    #[error("DC gain undefined (integrator)")]
    DcGainUndefined,

    #[error("relative degree lost at state (input sensitivity {0:e})")]
    RelativeDegreeLost(f64),

    #[error("simulation diverged at step {step}")]
    Diverged { step: usize },

    #[error("log too short: need at least {needed} samples, have {found}")]
    LogTooShort { needed: usize, found: usize },

    #[error("source {index} has {found} rows, fewer than the {needed} requested")]
    SourceTooSmall {
        index: usize,
        needed: usize,
        found: usize,
    },

    #[error("training diverged")]
    TrainingDiverged,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn check_dim(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::Dimension {
            what,
            expected,
            found,
        })
    }
}
