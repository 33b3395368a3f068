//! Classical post-processing of a sifted key: Cascade reconciliation and
//! privacy amplification, chained into an auditable key pipeline.

pub mod cascade;
pub mod pipeline;
pub mod toeplitz;

use thiserror::Error;

pub use cascade::{cascade_reconcile, ParityExchange, ReconciliationReport};
pub use pipeline::{final_key_length, run_pipeline, KeyPipelineReport, PaParams};
pub use toeplitz::toeplitz_hash;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PostprocessError {
    #[error("keys differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("key of {0} bits is too short to reconcile (need at least {min})", min = cascade::MIN_KEY_BITS)]
    KeyTooShort(usize),
    #[error("error estimate {0} outside (0, 0.5)")]
    InvalidErrorEstimate(f64),
    /// The verification hash still differs after the last pass; the error
    /// estimate was probably far too low.
    #[error("reconciliation left {remaining} residual errors")]
    ResidualErrors { remaining: usize },
    #[error("transcript diverges from the protocol at message {0}")]
    TranscriptMismatch(usize),
    #[error("cannot hash {n} bits down to {m}")]
    OutputTooLong { m: usize, n: usize },
}
