use std::fmt;

use crate::trace::TracePoint;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("unknown {kind} `{name}` (valid: {valid})")]
    Unknown {
        kind: &'static str,
        name: String,
        valid: String,
    },

    #[error("non-finite {what} in layer {layer}")]
    NonFinite { what: &'static str, layer: usize },

    #[error("{0}")]
    Diverged(Box<Divergence>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn unknown(kind: &'static str, name: &str, valid: &[&str]) -> Self {
        Error::Unknown {
            kind,
            name: name.to_owned(),
            valid: valid.join(", "),
        }
    }

    /// True for failures caused by the numbers rather than by the caller.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NonFinite { .. } | Error::Diverged(_))
    }
}

/// A training run that produced non-finite values.
///
/// The trace collected up to the failure is kept so callers can still
/// persist it.
#[derive(Debug, Clone)]
pub struct Divergence {
    pub phase: String,
    pub iteration: usize,
    pub last_stable_epoch: Option<usize>,
    pub cause: String,
    pub trace: Vec<TracePoint>,
}

impl fmt::Display for Divergence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} diverged at iteration {} ({})",
            self.phase, self.iteration, self.cause
        )?;
        match self.last_stable_epoch {
            Some(e) => write!(f, "; last stable epoch {e}"),
            None => write!(f, "; no stable epoch"),
        }
    }
}
