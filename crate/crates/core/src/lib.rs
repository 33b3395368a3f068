//! Weak-coherent-pulse BB84 over lossy fibre: analytic key rates under
//! photon-number-splitting and individual attacks, optimisation of the
//! pulse intensity, and pulse-level simulation of complete key sessions
//! through sifting, Cascade reconciliation and privacy amplification.

// Range checks are written as negated comparisons so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bits;
pub mod cli;
pub mod engine;
pub mod link;
pub mod optimize;
pub mod postprocess;
pub mod rate;

pub use bits::BitString;
pub use link::{ChannelParams, DetectorParams, LinkBudget, MultiphotonModel, SourceParams};
pub use optimize::{OptimizeConfig, Scenario, SecureWindow};
pub use rate::{GainBreakdown, RateParams};
