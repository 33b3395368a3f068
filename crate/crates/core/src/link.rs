//! Physical link parameters and the per-clock-cycle probabilities derived
//! from them: fibre transmission, Bob's click probability, the multi-photon
//! emission probability of a Poissonian source and the expected QBER.

use serde::Serialize;
use thiserror::Error;

/// Rejected parameter values.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("{name} = {value} is outside its valid range {range}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        range: &'static str,
    },
}

/// Domain errors raised by the link model.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinkError {
    #[error("detection probability {0} exceeds 1: unphysical parameter combination")]
    DetectionAboveOne(f64),
    #[error("detection probability is zero, QBER undefined")]
    NoDetections,
}

fn check(name: &'static str, value: f64, ok: bool, range: &'static str) -> Result<(), ParamError> {
    if ok && value.is_finite() {
        Ok(())
    } else {
        Err(ParamError::OutOfRange { name, value, range })
    }
}

/// Alice's weak coherent source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SourceParams {
    mu: f64,
    clock_rate: f64,
}

impl SourceParams {
    /// `mu` is the mean photon number per clock cycle. Zero is accepted so
    /// that dark-count-only runs can be modelled.
    pub fn new(mu: f64, clock_rate: f64) -> Result<Self, ParamError> {
        check("mu", mu, mu >= 0.0, "[0, inf)")?;
        check("clock_rate", clock_rate, clock_rate > 0.0, "(0, inf)")?;
        Ok(Self { mu, clock_rate })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn clock_rate(&self) -> f64 {
        self.clock_rate
    }

    pub fn with_mu(self, mu: f64) -> Result<Self, ParamError> {
        Self::new(mu, self.clock_rate)
    }
}

/// Fibre between Alice and Bob.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChannelParams {
    length_km: f64,
    attenuation_db_per_km: f64,
}

impl ChannelParams {
    pub fn new(length_km: f64, attenuation_db_per_km: f64) -> Result<Self, ParamError> {
        check("length_km", length_km, length_km >= 0.0, "[0, inf)")?;
        check(
            "attenuation_db_per_km",
            attenuation_db_per_km,
            attenuation_db_per_km >= 0.0,
            "[0, inf)",
        )?;
        Ok(Self {
            length_km,
            attenuation_db_per_km,
        })
    }

    pub fn length_km(&self) -> f64 {
        self.length_km
    }

    pub fn attenuation_db_per_km(&self) -> f64 {
        self.attenuation_db_per_km
    }

    pub fn with_length(self, length_km: f64) -> Result<Self, ParamError> {
        Self::new(length_km, self.attenuation_db_per_km)
    }

    pub fn loss_db(&self) -> f64 {
        self.length_km * self.attenuation_db_per_km
    }
}

/// Bob's gated detection apparatus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DetectorParams {
    efficiency: f64,
    dark_prob: f64,
    modulation_error: f64,
}

impl DetectorParams {
    /// `efficiency` includes Bob's optical losses; `dark_prob` is the total
    /// erroneous click probability per gate; `modulation_error` is the
    /// probability that a correctly-based signal click yields the wrong bit.
    pub fn new(efficiency: f64, dark_prob: f64, modulation_error: f64) -> Result<Self, ParamError> {
        check("efficiency", efficiency, efficiency > 0.0 && efficiency <= 1.0, "(0, 1]")?;
        check("dark_prob", dark_prob, (0.0..1.0).contains(&dark_prob), "[0, 1)")?;
        check(
            "modulation_error",
            modulation_error,
            (0.0..0.5).contains(&modulation_error),
            "[0, 0.5)",
        )?;
        Ok(Self {
            efficiency,
            dark_prob,
            modulation_error,
        })
    }

    pub fn efficiency(&self) -> f64 {
        self.efficiency
    }

    pub fn dark_prob(&self) -> f64 {
        self.dark_prob
    }

    pub fn modulation_error(&self) -> f64 {
        self.modulation_error
    }
}

/// The reference operating point: 2 MHz clock, 0.21 dB/km fibre, 4.5 %
/// overall detection efficiency, 8e-7 erroneous clicks per gate and a 3 %
/// modulation error.
pub mod reference {
    pub const CLOCK_RATE_HZ: f64 = 2.0e6;
    pub const ATTENUATION_DB_PER_KM: f64 = 0.21;
    pub const EFFICIENCY: f64 = 0.045;
    pub const DARK_PROB: f64 = 8.0e-7;
    pub const MODULATION_ERROR: f64 = 0.03;
}

impl Default for DetectorParams {
    fn default() -> Self {
        Self {
            efficiency: reference::EFFICIENCY,
            dark_prob: reference::DARK_PROB,
            modulation_error: reference::MODULATION_ERROR,
        }
    }
}

/// How the probability of a multi-photon pulse is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MultiphotonModel {
    /// Leading-order term `mu^2 / 2`.
    #[default]
    Approx,
    /// `1 - e^-mu (1 + mu)`.
    ExactPoisson,
}

impl std::str::FromStr for MultiphotonModel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "approx" => Ok(Self::Approx),
            "exact" | "exact_poisson" | "exact-poisson" => Ok(Self::ExactPoisson),
            other => Err(format!("unknown multiphoton model '{other}' (expected approx|exact_poisson)")),
        }
    }
}

/// Derived per-pulse probabilities of one operating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinkBudget {
    pub transmission: f64,
    /// `mu * eta * t`: probability of a signal click.
    pub signal_prob: f64,
    /// `signal_prob + d`.
    pub detect_prob: f64,
    pub multiphoton_prob: f64,
    pub qber: f64,
}

impl LinkBudget {
    pub fn compute(
        source: &SourceParams,
        channel: &ChannelParams,
        detector: &DetectorParams,
        model: MultiphotonModel,
    ) -> Result<Self, LinkError> {
        let transmission = transmission(channel);
        let signal_prob = source.mu * detector.efficiency * transmission;
        let detect_prob = detection_prob(source, channel, detector)?;
        Ok(Self {
            transmission,
            signal_prob,
            detect_prob,
            multiphoton_prob: multiphoton_prob(source.mu, model),
            qber: qber(source, channel, detector)?,
        })
    }
}

/// Fibre transmission `10^(-alpha l / 10)`.
pub fn transmission(channel: &ChannelParams) -> f64 {
    10f64.powf(-channel.loss_db() / 10.0)
}

/// Probability per clock cycle that Bob registers a click, `mu eta t + d`.
pub fn detection_prob(
    source: &SourceParams,
    channel: &ChannelParams,
    detector: &DetectorParams,
) -> Result<f64, LinkError> {
    let p = source.mu * detector.efficiency * transmission(channel) + detector.dark_prob;
    if p > 1.0 {
        return Err(LinkError::DetectionAboveOne(p));
    }
    Ok(p)
}

/// Probability that the source emits two or more photons in a pulse.
pub fn multiphoton_prob(mu: f64, model: MultiphotonModel) -> f64 {
    match model {
        MultiphotonModel::Approx => 0.5 * mu * mu,
        // 1 - e^-mu (1 + mu) loses every digit to cancellation for small mu,
        // so sum the tail of the series instead.
        MultiphotonModel::ExactPoisson if mu < 0.5 => {
            let mut term = 0.5 * mu * mu;
            let mut tail = 0.0;
            let mut k = 2.0;
            while term > tail * 1e-18 {
                tail += term;
                k += 1.0;
                term *= mu / k;
            }
            (-mu).exp() * tail
        }
        MultiphotonModel::ExactPoisson => 1.0 - (-mu).exp() * (1.0 + mu),
    }
}

/// Expected error rate of the sifted key: signal clicks are wrong with the
/// modulation error, erroneous counts half of the time.
pub fn qber(
    source: &SourceParams,
    channel: &ChannelParams,
    detector: &DetectorParams,
) -> Result<f64, LinkError> {
    let p = detection_prob(source, channel, detector)?;
    if p <= 0.0 {
        return Err(LinkError::NoDetections);
    }
    let signal = source.mu * detector.efficiency * transmission(channel);
    Ok((detector.modulation_error * signal + 0.5 * detector.dark_prob) / p)
}
