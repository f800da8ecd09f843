use std::io;

use thiserror::Error;

use crate::linsolve::SolveReport;
use crate::scheme::Stage;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("shape mismatch: expected {expected} values, found {found}")]
    ShapeMismatch { expected: usize, found: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("non-finite evaluation: {0}")]
    Evaluation(String),

    #[error("linear solver did not converge{}: {} iterations, relative residual {:e}",
        stage.map(|s| format!(" in {s}")).unwrap_or_default(),
        report.iterations, report.final_relative_residual)]
    NonConvergence {
        report: SolveReport,
        stage: Option<Stage>,
    },

    #[error("dense oracle limited to {cap} cells per side, got {m}")]
    OracleDimension { m: usize, cap: usize },

    #[error("singular matrix in dense factorization")]
    SingularMatrix,

    #[error("config key `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }
}
