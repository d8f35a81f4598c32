use std::fmt;

use thiserror::Error;

/// A single failed dataset check.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub row: Option<usize>,
    pub rule: &'static str,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.row {
            Some(row) => write!(f, "{}, row {}: {}", self.rule, row, self.detail),
            None => write!(f, "{}: {}", self.rule, self.detail),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("dataset failed validation with {} violation(s); first: {}", .0.len(), .0.first().map(ToString::to_string).unwrap_or_default())]
    Validation(Vec<Violation>),

    #[error("weighted normal equations are numerically singular; consider a ridge penalty > 0")]
    SingularDesign,

    #[error("separation detected: {0}; consider a ridge penalty > 0")]
    Separation(String),

    #[error("invalid nuisance strategy: {0}")]
    InvalidStrategy(String),

    #[error("nuisance estimate missing: {0}")]
    NuisanceMissing(&'static str),

    #[error("positivity violated: p_hat = {value} on source row {row}")]
    Positivity { row: usize, value: f64 },

    #[error("no source (D=1) rows available")]
    EmptySource,

    #[error("no target (D=0) rows available")]
    EmptyTarget,

    #[error("oracle estimator needs outcomes on every target row (missing on row {0})")]
    OracleUnavailable(usize),

    #[error("fold {fold} has no rows with D={missing}")]
    FoldDegenerate { fold: usize, missing: u8 },

    #[error("covariance matrix is not symmetric positive definite")]
    NotPositiveDefinite,

    #[error("{failed} of {total} replicates failed (limit {limit_pct}%); first failure: {first}")]
    ExcessFailures {
        failed: usize,
        total: usize,
        limit_pct: f64,
        first: String,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerical machinery, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SingularDesign
                | Error::Separation(_)
                | Error::Positivity { .. }
                | Error::FoldDegenerate { .. }
                | Error::NotPositiveDefinite
                | Error::ExcessFailures { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
