//! Point-correction layer: repairs predicted anchor points before
//! transfer.
//!
//! Demonstrations and hand-eye calibration are imperfect; the harness
//! models that as a seeded rigid-plus-noise perturbation of the anchor
//! points. Correction policies undo what they can: `passthrough` does
//! nothing (the baseline), `snap` moves each point to the nearest object
//! centroid within a radius, and `external` asks a language-model
//! endpoint over a versioned JSON protocol, with a deterministic
//! in-process mock standing in wherever determinism matters.

mod policy;
mod protocol;
mod score;

pub use policy::{
    correct_points, correct_points_with_transport, CorrectionPolicy, CorrectionTransport,
    Corrected, ExternalPolicy, HttpTransport, MockBehavior, SNAP_RADIUS,
};
pub use protocol::{
    build_prompt, parse_response, CorrectionRequest, CorrectionResponse, TaggedPoint,
    PROTOCOL_VERSION,
};
pub use score::{alignment_score, inject_error, ErrorModel};

use thiserror::Error;

/// Enumerated reasons an external payload is rejected.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProtocolFailure {
    InvalidJson,
    CountMismatch { expected: usize, actual: usize },
    NonNumeric,
    OutOfBounds,
}

impl std::fmt::Display for ProtocolFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ProtocolFailure::InvalidJson => f.write_str("invalid JSON"),
            ProtocolFailure::CountMismatch { expected, actual } => {
                write!(f, "expected {expected} points, got {actual}")
            }
            ProtocolFailure::NonNumeric => f.write_str("non-finite or non-numeric point"),
            ProtocolFailure::OutOfBounds => f.write_str("point outside workspace bounds"),
        }
    }
}

#[derive(Debug, Error)]
pub enum LapVcError {
    /// The raw payload is retained for diagnosis.
    #[error("protocol error ({reason}); payload: {payload}")]
    Protocol {
        reason: ProtocolFailure,
        payload: String,
    },
    #[error("transport: {0}")]
    Transport(String),
    #[error("correction config: {0}")]
    Config(String),
}

/// Env var naming the external endpoint URL.
pub const ENDPOINT_ENV: &str = "THERBLIG_LLM_ENDPOINT";
/// Env var carrying the bearer token, sent as `Authorization: Bearer`.
pub const TOKEN_ENV: &str = "THERBLIG_LLM_TOKEN";
/// Env var overriding the request timeout in seconds.
pub const TIMEOUT_ENV: &str = "THERBLIG_LLM_TIMEOUT_S";
