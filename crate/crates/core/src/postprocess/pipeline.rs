//! From a simulated session to a final secret key, with every disclosed or
//! discarded bit accounted for.

use serde::Serialize;

use super::cascade::{self, ParityExchange};
use super::{toeplitz, PostprocessError};
use crate::bits::BitString;
use crate::engine::SessionResult;
use crate::link::LinkBudget;
use crate::rate::{self, RateParams};

/// Cascade needs a positive error estimate; a clean sample is reconciled as
/// if one percent of the bits were wrong.
pub const MIN_CASCADE_ERROR_ESTIMATE: f64 = 0.01;
const MAX_CASCADE_ERROR_ESTIMATE: f64 = 0.45;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PaParams {
    pub hash_seed: u64,
    /// Extra bits removed on top of the estimated leakage.
    pub security_margin_bits: u64,
}

impl Default for PaParams {
    fn default() -> Self {
        Self {
            hash_seed: 0,
            security_margin_bits: 30,
        }
    }
}

/// Secret bits extractable from `n_sifted` reconciled bits: the privacy
/// amplification fraction of the key minus the measured leakage and the
/// security margin, floored at zero.
pub fn final_key_length(n_sifted: u64, e: f64, leakage_bits: u64, link: &LinkBudget, pa: &PaParams) -> u64 {
    match rate::pa_fraction(link.detect_prob, link.multiphoton_prob, e) {
        Ok(tau) => ((n_sifted as f64 * tau).floor() as u64)
            .saturating_sub(leakage_bits)
            .saturating_sub(pa.security_margin_bits),
        Err(_) => 0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReconciliationSummary {
    pub error_estimate: f64,
    pub parity_bits: u64,
    pub verification_bits: u64,
    pub corrections: u64,
    pub passes: usize,
    pub measured_efficiency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KeyPipelineReport {
    pub sifted_count: u64,
    pub sample_disclosed: u64,
    pub qber_est: f64,
    pub low_confidence: bool,
    /// Key length entering reconciliation (sifted minus sample).
    pub reconciled_length: u64,
    pub reconciliation: Option<ReconciliationSummary>,
    /// All bits disclosed during reconciliation, parities and verification.
    pub leakage_bits: u64,
    pub pa_fraction: Option<f64>,
    /// Error-correction cost the rate model would charge, `n f(e) H2(e)`.
    pub model_ec_bits: f64,
    pub security_margin_bits: u64,
    pub final_length: u64,
    pub hash_seed: u64,
    pub cascade_seed: u64,
    /// Why no key was produced, when that happened before hashing.
    pub note: Option<String>,
    #[serde(skip)]
    pub alice_key: BitString,
    #[serde(skip)]
    pub bob_key: BitString,
    #[serde(skip)]
    pub transcript: Vec<ParityExchange>,
}

/// Reconcile and compress a session's sifted keys. The QBER estimate and
/// sample disclosure come from the session itself.
pub fn run_pipeline(
    session: &SessionResult,
    link: &LinkBudget,
    rate_params: &RateParams,
    pa: &PaParams,
    cascade_seed: u64,
) -> Result<KeyPipelineReport, PostprocessError> {
    let n = session.alice_sifted.len() as u64;
    let e = session.qber_est;
    let pa_fraction = rate::pa_fraction(link.detect_prob, link.multiphoton_prob, e);
    let mut report = KeyPipelineReport {
        sifted_count: session.sifted_count,
        sample_disclosed: session.sample_size,
        qber_est: e,
        low_confidence: session.low_confidence,
        reconciled_length: n,
        reconciliation: None,
        leakage_bits: 0,
        pa_fraction: pa_fraction.ok(),
        model_ec_bits: n as f64 * rate_params.correction_efficiency * rate::binary_entropy(e),
        security_margin_bits: pa.security_margin_bits,
        final_length: 0,
        hash_seed: pa.hash_seed,
        cascade_seed,
        note: None,
        alice_key: BitString::new(),
        bob_key: BitString::new(),
        transcript: Vec::new(),
    };

    if let Err(err) = pa_fraction {
        report.note = Some(err.to_string());
        return Ok(report);
    }
    if (n as usize) < cascade::MIN_KEY_BITS {
        report.note = Some(PostprocessError::KeyTooShort(n as usize).to_string());
        return Ok(report);
    }

    let e_cascade = e.clamp(MIN_CASCADE_ERROR_ESTIMATE, MAX_CASCADE_ERROR_ESTIMATE);
    let rec = cascade::cascade_reconcile(&session.alice_sifted, &session.bob_sifted, e_cascade, cascade_seed)?;
    report.leakage_bits = rec.total_leakage();
    report.reconciliation = Some(ReconciliationSummary {
        error_estimate: e_cascade,
        parity_bits: rec.leakage_bits,
        verification_bits: rec.verification_bits,
        corrections: rec.corrections,
        passes: rec.passes,
        measured_efficiency: rec.measured_efficiency,
    });

    let m = final_key_length(n, e, report.leakage_bits, link, pa);
    report.final_length = m;
    report.alice_key = toeplitz::toeplitz_hash(&session.alice_sifted, m as usize, pa.hash_seed)?;
    report.bob_key = toeplitz::toeplitz_hash(&rec.corrected_key, m as usize, pa.hash_seed)?;
    report.transcript = rec.transcript;
    Ok(report)
}
