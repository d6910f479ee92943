use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("{what} = {value} outside allowed range {range}")]
    OutOfRange {
        what: &'static str,
        value: f64,
        range: &'static str,
    },
    #[error("radial function not positive at node {node} (rho^d = {value})")]
    Positivity { node: usize, value: f64 },
    #[error("grid of {cells} cells exceeds limit of {limit}")]
    Memory { cells: usize, limit: usize },
    #[error("mismatched spacing: {0} vs {1}")]
    Spacing(f64, f64),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("{} config schema violation(s): {}", .0.len(), join_violations(.0))]
    Schema(Vec<Violation>),
    #[error("no convergence: {0}")]
    Convergence(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// A config problem located by a JSON pointer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub pointer: String,
    pub msg: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let p = if self.pointer.is_empty() { "/" } else { &self.pointer };
        write!(f, "{p}: {}", self.msg)
    }
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_finite(x: f64, what: &'static str) -> Result<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::NonFinite(what))
    }
}
