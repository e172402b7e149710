use std::fmt;

/// Result alias used across the crate.
pub type Result<T, E = Error> = std::result::Result<T, E>;

/// One located problem found while reading a config file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    /// 1-based line number, `None` for problems not tied to a line (missing keys).
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "line {line}: {}", self.message),
            None => write!(f, "{}", self.message),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("convexity violated along axis {axis} at flat index {index}: second difference {second_difference:e}")]
    ConvexityViolation {
        axis: usize,
        index: usize,
        second_difference: f64,
    },

    #[error("non-finite state produced at step {step}")]
    NonFiniteState { step: usize },

    #[error("ill-conditioned regression at step {step} (condition number {condition:e})")]
    IllConditioned { step: usize, condition: f64 },

    #[error("ellipticity violated at step {step}: smallest singular value squared {value:e} below {threshold:e}")]
    EllipticityViolation {
        step: usize,
        value: f64,
        threshold: f64,
    },

    #[error("infeasible control template: {0}")]
    InfeasibleTemplate(String),

    #[error("optimizer failed: {0}")]
    Infeasible(String),

    #[error("config rejected:\n{}", format_diagnostics(.0))]
    Config(Vec<Diagnostic>),

    #[error("malformed table: {0}")]
    Table(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn format_diagnostics(items: &[Diagnostic]) -> String {
    items
        .iter()
        .map(|d| format!("  {d}"))
        .collect::<Vec<_>>()
        .join("\n")
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
