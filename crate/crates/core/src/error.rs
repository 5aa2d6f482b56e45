use std::path::PathBuf;

use crate::instance::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed instance file. The serde message carries line, column and field.
    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("invalid instance: {}", join_violations(.0))]
    Invalid(Vec<Violation>),

    #[error("state space of {states} allocations exceeds the cap of {cap}")]
    StateSpaceTooLarge { states: u128, cap: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A best-response check found a strictly improving unilateral move.
    #[error("allocation is not a Nash equilibrium: agent {} improves by {improvement:.3e} switching to resource {}", .agent + 1, .resource + 1)]
    NotEquilibrium {
        agent: usize,
        resource: usize,
        improvement: f64,
    },

    #[error("best-response dynamics did not converge within {sweeps} sweeps")]
    NoConvergence { sweeps: usize },
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

fn join_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}
