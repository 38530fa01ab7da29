use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;

use crate::date::Date;

pub type Result<T> = core::result::Result<T, Error>;

/// State of an optimizer that ran out of iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceState {
    pub iterations: usize,
    pub last_iterate: Vec<f64>,
    pub likelihood_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("input contains no data")]
    EmptyData,
    #[error("invalid price: {0}")]
    InvalidPrice(String),
    #[error("rejected bar: {0}")]
    RejectedBar(String),
    #[error("duplicate timestamp {date} minute {minute}")]
    DuplicateTimestamp { date: Date, minute: u16 },
    #[error("every day fell below the coverage threshold")]
    EmptyPanel,
    #[error("panels share no common days")]
    NoCommonDays,
    #[error("degenerate scale: max equals min ({0})")]
    DegenerateScale(f64),
    #[error("no admissible samples")]
    EmptySampleSet,
    #[error("degenerate series: zero variance")]
    DegenerateSeries,
    #[error("insufficient history: need {needed}, got {got}")]
    InsufficientHistory { needed: usize, got: usize },
    #[error("singular design matrix (constant series?)")]
    SingularFit,
    #[error("optimizer did not converge after {} iterations", .0.iterations)]
    ConvergenceFailure(Box<ConvergenceState>),
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
    #[error("every grid cell failed")]
    TuningFailed,
    #[error("shape error: {0}")]
    Shape(String),
    #[error("training diverged at epoch {epoch}")]
    Divergence { epoch: usize },
    #[error("invalid model spec: {0}")]
    Spec(String),
    #[error("cannot split: {0}")]
    Split(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    /// True for failures of a numerical procedure rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::ConvergenceFailure(_)
                | Error::DegenerateFit(_)
                | Error::Divergence { .. }
                | Error::SingularFit
                | Error::TuningFailed
        )
    }
}
