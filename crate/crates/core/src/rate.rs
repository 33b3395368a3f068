//! Secure key gain per clock cycle against individual attacks including
//! photon-number splitting, and the entropy terms it is built from.

use serde::Serialize;
use thiserror::Error;

use crate::link::{
    self, ChannelParams, DetectorParams, LinkError, MultiphotonModel, ParamError, SourceParams,
};

/// Error-correction efficiency used for the reference contour calculation.
pub const REFERENCE_CORRECTION_EFFICIENCY: f64 = 1.18;
/// Error-correction efficiency quoted for Cascade below 5 % QBER.
pub const CASCADE_CORRECTION_EFFICIENCY: f64 = 1.16;

#[derive(Debug, Clone, Copy, PartialEq, Error, Serialize)]
pub enum RateError {
    /// Multi-photon pulses are at least as frequent as Bob's clicks: Eve can
    /// read every bit without changing Bob's count rate.
    #[error("multi-photon probability {multiphoton} is not below the detection probability {detect}")]
    SecurityViolation { detect: f64, multiphoton: f64 },
    /// The error rate on the non-multi-photon fraction reaches 1/2, where the
    /// individual-attack bound leaves nothing to distil.
    #[error("effective error rate {effective_qber} on single-photon bits is at least 1/2")]
    ExcessiveError { effective_qber: f64 },
    #[error("invalid argument: {0}")]
    Domain(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateParams {
    /// Multiplier `f(e) >= 1` on the Shannon limit of error-correction cost.
    pub correction_efficiency: f64,
    pub multiphoton_model: MultiphotonModel,
}

impl RateParams {
    pub fn new(correction_efficiency: f64, multiphoton_model: MultiphotonModel) -> Result<Self, ParamError> {
        if !(correction_efficiency >= 1.0 && correction_efficiency.is_finite()) {
            return Err(ParamError::OutOfRange {
                name: "correction_efficiency",
                value: correction_efficiency,
                range: "[1, inf)",
            });
        }
        Ok(Self {
            correction_efficiency,
            multiphoton_model,
        })
    }

    /// Same penalty model with `f(e)` replaced by an efficiency measured on a
    /// real reconciliation run.
    pub fn with_measured_efficiency(self, measured: f64) -> Result<Self, ParamError> {
        Self::new(measured.max(1.0), self.multiphoton_model)
    }
}

impl Default for RateParams {
    fn default() -> Self {
        Self {
            correction_efficiency: REFERENCE_CORRECTION_EFFICIENCY,
            multiphoton_model: MultiphotonModel::Approx,
        }
    }
}

/// Terms of the secure gain at one operating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GainBreakdown {
    pub detect_prob: f64,
    pub multiphoton_prob: f64,
    pub qber: f64,
    /// `P / 2`.
    pub sifted_gain: f64,
    /// Fraction of sifted bits surviving privacy amplification; zero when
    /// `violation` is set.
    pub pa_fraction: f64,
    /// `f(e) H2(e)` bits per sifted bit.
    pub ec_cost: f64,
    /// `sifted_gain * (pa_fraction - ec_cost)`. Negative values are kept.
    pub secure_gain: f64,
    pub violation: Option<RateError>,
}

impl GainBreakdown {
    /// True when a positive key rate survives all penalties.
    pub fn is_secure(&self) -> bool {
        self.violation.is_none() && self.secure_gain > 0.0
    }
}

/// Shannon entropy of a biased coin in bits, with `0 log 0 = 0`.
pub fn binary_entropy(e: f64) -> f64 {
    if e <= 0.0 || e >= 1.0 {
        return 0.0;
    }
    -(e * e.log2() + (1.0 - e) * (1.0 - e).log2())
}

/// Fraction of sifted bits left after privacy amplification when every
/// multi-photon pulse is assumed known to Eve and the observed errors are
/// charged to an individual attack on the remainder.
pub fn pa_fraction(detect: f64, multiphoton: f64, qber: f64) -> Result<f64, RateError> {
    if !(detect > 0.0 && multiphoton >= 0.0) {
        return Err(RateError::Domain("need P > 0 and S >= 0"));
    }
    if !(0.0..0.5).contains(&qber) {
        return Err(RateError::Domain("need 0 <= e < 1/2"));
    }
    if detect <= multiphoton {
        return Err(RateError::SecurityViolation {
            detect,
            multiphoton,
        });
    }
    let single = (detect - multiphoton) / detect;
    let effective = qber / single;
    if effective >= 0.5 {
        return Err(RateError::ExcessiveError {
            effective_qber: effective,
        });
    }
    let arg = 1.0 + 4.0 * effective - 4.0 * effective * effective;
    Ok(single * (1.0 - arg.log2()))
}

pub fn sifted_gain(detect: f64) -> f64 {
    0.5 * detect
}

pub fn gain_to_bps(gain: f64, clock_rate: f64) -> f64 {
    gain * clock_rate
}

/// Secure gain from raw probabilities, shared by [`secure_gain`] and the
/// optimiser's inner loop.
pub fn gain_from_probabilities(
    detect: f64,
    multiphoton: f64,
    qber: f64,
    correction_efficiency: f64,
) -> GainBreakdown {
    let sifted = sifted_gain(detect);
    let ec_cost = correction_efficiency * binary_entropy(qber);
    let (pa, violation) = match pa_fraction(detect, multiphoton, qber) {
        Ok(pa) => (pa, None),
        Err(err) => (0.0, Some(err)),
    };
    GainBreakdown {
        detect_prob: detect,
        multiphoton_prob: multiphoton,
        qber,
        sifted_gain: sifted,
        pa_fraction: pa,
        ec_cost,
        secure_gain: sifted * (pa - ec_cost),
        violation,
    }
}

/// Secure key bits per clock cycle. Security violations are reported in the
/// breakdown rather than as errors; only unphysical inputs fail.
pub fn secure_gain(
    source: &SourceParams,
    channel: &ChannelParams,
    detector: &DetectorParams,
    params: &RateParams,
) -> Result<GainBreakdown, LinkError> {
    let detect = link::detection_prob(source, channel, detector)?;
    let qber = link::qber(source, channel, detector)?;
    let multiphoton = link::multiphoton_prob(source.mu(), params.multiphoton_model);
    Ok(gain_from_probabilities(
        detect,
        multiphoton,
        qber,
        params.correction_efficiency,
    ))
}
