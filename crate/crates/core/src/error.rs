use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid {field}: {reason}")]
    Validation { field: &'static str, reason: String },

    #[error("postselection is orthogonal to the preparation (|<phi|psi>| = {overlap:e}); weak values and postselected averages are undefined")]
    OrthogonalPostselection { overlap: f64 },

    #[error("grid [{min}, {max}] too small for shift {shift}: edge amplitude {edge:e} relative to peak")]
    GridTooSmall {
        min: f64,
        max: f64,
        shift: f64,
        edge: f64,
    },

    #[error("objective is flat (trace term {trace:e}); no extremum to locate")]
    FlatObjective { trace: f64 },

    #[error("failure-branch density is negative ({min:e}) at x={x}, y={y}; amplitudes and branch weights are inconsistent")]
    PositivityViolation { min: f64, x: f64, y: f64 },

    #[error("numerical consistency check failed: {0}")]
    Consistency(String),

    #[error("need at least {needed} trials, got {got}")]
    TooFewTrials { needed: usize, got: usize },

    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn validation(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Validation {
            field,
            reason: reason.into(),
        }
    }
}
