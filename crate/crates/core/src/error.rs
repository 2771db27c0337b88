use thiserror::Error;

use crate::choquet::Diagnostics;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid system: {0}")]
    InvalidSystem(String),

    #[error("invalid point: {0}")]
    InvalidPoint(String),

    #[error("point variant `{point}` does not belong to system `{system}`")]
    PointSystemMismatch {
        point: &'static str,
        system: &'static str,
    },

    #[error("measure `{measure}` cannot be registered on system `{system}`: {reason}")]
    Registration {
        measure: String,
        system: &'static str,
        reason: String,
    },

    #[error("invalid test-function family: {0}")]
    InvalidFamily(String),

    #[error("test function {function} is not supported on {target}")]
    UnsupportedFunction { function: String, target: String },

    #[error("moment vectors belong to different families ({left} vs {right})")]
    FamilyMismatch { left: String, right: String },

    #[error("orbit length {requested} exceeds the limit of {limit}")]
    OrbitTooLong { requested: u64, limit: u64 },

    #[error("invalid checkpoints: {0}")]
    InvalidCheckpoints(String),

    #[error("invalid detector parameters: {0}")]
    InvalidDetector(String),

    #[error("invalid decomposition parameters: {0}")]
    InvalidDecomposition(String),

    #[error(
        "decomposition failed: only {:.3} of {} samples converged",
        .0.converged_fraction, .0.samples
    )]
    DecompositionFailed(Box<Diagnostics>),

    #[error("atom {atom} matches no registered component within {eps}")]
    UnmatchedAtom { atom: usize, eps: f64 },

    #[error("word space too large: {alphabet}^{length} words exceeds 2^24")]
    WordSpaceTooLarge { alphabet: usize, length: usize },

    #[error("unsupported Borel set {set} for {target}")]
    UnsupportedSet { set: String, target: String },
}
