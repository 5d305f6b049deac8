//! Error type shared by every numerical stage.

use thiserror::Error;

/// Pipeline stage that produced an error. Used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Params,
    Kernel,
    Operator,
    Delaunay,
    Interactions,
    Balance,
    Reduce,
    Assemble,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Params => "params",
            Stage::Kernel => "kernel",
            Stage::Operator => "operator",
            Stage::Delaunay => "delaunay",
            Stage::Interactions => "interactions",
            Stage::Balance => "balance",
            Stage::Reduce => "reduce",
            Stage::Assemble => "assemble",
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("{stage}: argument outside the admissible domain: {reason}", stage = .stage.as_str())]
    Domain { stage: Stage, reason: String },

    #[error("{stage}: refused: {reason}", stage = .stage.as_str())]
    Refused { stage: Stage, reason: String },

    #[error("{stage}: no convergence after {iterations} iterations (last residual {residual:.3e})", stage = .stage.as_str())]
    NoConvergence {
        stage: Stage,
        iterations: usize,
        residual: f64,
    },
}

impl Error {
    pub fn stage(&self) -> Stage {
        match self {
            Error::InvalidParams(_) => Stage::Params,
            Error::Domain { stage, .. }
            | Error::Refused { stage, .. }
            | Error::NoConvergence { stage, .. } => *stage,
        }
    }

    /// Short machine-parsable reason code.
    pub fn code(&self) -> String {
        let kind = match self {
            Error::InvalidParams(_) => "invalid",
            Error::Domain { .. } => "domain",
            Error::Refused { .. } => "refused",
            Error::NoConvergence { .. } => "diverged",
        };
        format!("{}.{}", self.stage().as_str(), kind)
    }

    pub(crate) fn refused(stage: Stage, reason: impl Into<String>) -> Self {
        Error::Refused {
            stage,
            reason: reason.into(),
        }
    }

    pub(crate) fn domain(stage: Stage, reason: impl Into<String>) -> Self {
        Error::Domain {
            stage,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
