//! Pulse-level Monte Carlo of BB84 with a weak coherent source.
//!
//! Each pulse draws a Poisson photon number; every photon then survives the
//! fibre and Bob's apparatus independently (binomial thinning), and the gate
//! can also fire on an erroneous count. Only pulses on which Bob clicks are
//! kept in memory, so sessions of 10^9 pulses fit comfortably.
//!
//! Randomness is ChaCha8 keyed by the session seed (via `seed_from_u64`),
//! one stream per block of [`BLOCK_PULSES`] consecutive pulses. Blocks are
//! simulated independently and merged in index order, so a session depends
//! only on its seed and configuration, never on the number of threads.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::bits::BitString;
use crate::link::{self, ChannelParams, DetectorParams, ParamError, SourceParams};

/// Pulses per RNG stream.
pub const BLOCK_PULSES: u64 = 1 << 16;
/// Stream reserved for choosing the disclosed QBER sample.
const SAMPLE_STREAM: u64 = u64::MAX;
/// Samples smaller than this give a low-confidence QBER estimate.
pub const MIN_CONFIDENT_SAMPLE: usize = 100;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("record streams differ in length ({alice} vs {bob})")]
    LengthMismatch { alice: usize, bob: usize },
    #[error(transparent)]
    Param(#[from] ParamError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Basis {
    Rectilinear,
    Diagonal,
}

impl Basis {
    fn random<R: Rng>(rng: &mut R) -> Self {
        if rng.random::<bool>() {
            Basis::Diagonal
        } else {
            Basis::Rectilinear
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct AliceRecord {
    pub bit: bool,
    pub basis: Basis,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BobRecord {
    pub basis: Basis,
    /// `None` when the gate did not fire.
    pub outcome: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EveStrategy {
    /// Block single-photon pulses, keep one photon of every multi-photon
    /// pulse and forward the rest over a better channel.
    Pns,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EveConfig {
    pub strategy: EveStrategy,
    /// Probability that a photon forwarded by Eve produces a click at Bob.
    /// Eve is granted the whole path to the click, including Bob's own
    /// inefficiency, which is the worst case behind the multi-photon
    /// security criterion.
    pub replacement_transmission: f64,
}

impl EveConfig {
    pub fn pns(replacement_transmission: f64) -> Self {
        Self {
            strategy: EveStrategy::Pns,
            replacement_transmission,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimConfig {
    pub n_pulses: u64,
    pub seed: u64,
    pub eve: Option<EveConfig>,
    pub source: SourceParams,
    pub channel: ChannelParams,
    pub detector: DetectorParams,
    /// Fraction of the sifted key disclosed to estimate the QBER.
    pub sample_fraction: f64,
}

impl SimConfig {
    pub fn new(
        n_pulses: u64,
        seed: u64,
        source: SourceParams,
        channel: ChannelParams,
        detector: DetectorParams,
    ) -> Self {
        Self {
            n_pulses,
            seed,
            eve: None,
            source,
            channel,
            detector,
            sample_fraction: 0.1,
        }
    }

    pub fn with_eve(mut self, eve: EveConfig) -> Self {
        self.eve = Some(eve);
        self
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        if self.n_pulses == 0 {
            return Err(EngineError::Config("n_pulses must be at least 1".into()));
        }
        if !(self.sample_fraction > 0.0 && self.sample_fraction < 1.0) {
            return Err(EngineError::Config(format!(
                "sample_fraction {} outside (0, 1)",
                self.sample_fraction
            )));
        }
        if let Some(eve) = &self.eve {
            let t = link::transmission(&self.channel);
            let r = eve.replacement_transmission;
            if !(r > 0.0 && r <= 1.0) {
                return Err(EngineError::Config(format!("replacement transmission {r} outside (0, 1]")));
            }
            if r < t {
                return Err(EngineError::Config(format!(
                    "replacement transmission {r} below the fibre transmission {t}: Eve would lower Bob's rate"
                )));
            }
        }
        Ok(())
    }
}

/// Ground-truth bookkeeping that the real parties could not observe.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SessionCounts {
    pub multiphoton_pulses: u64,
    pub signal_detections: u64,
    pub dark_only_detections: u64,
    /// Sifted positions where a photon reached the detector.
    pub sifted_signal: u64,
    /// Sifted positions whose pulse carried two or more photons.
    pub sifted_multiphoton: u64,
    /// Sifted positions where Eve holds a copy of Alice's photon.
    pub sifted_eve_known: u64,
    /// Errors in the full sifted key, before the sample is removed.
    pub sifted_errors: u64,
}

impl SessionCounts {
    fn merge(&mut self, o: &SessionCounts) {
        self.multiphoton_pulses += o.multiphoton_pulses;
        self.signal_detections += o.signal_detections;
        self.dark_only_detections += o.dark_only_detections;
        self.sifted_signal += o.sifted_signal;
        self.sifted_multiphoton += o.sifted_multiphoton;
        self.sifted_eve_known += o.sifted_eve_known;
        self.sifted_errors += o.sifted_errors;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionResult {
    /// Sifted keys with the disclosed sample removed.
    pub alice_sifted: BitString,
    pub bob_sifted: BitString,
    pub n_pulses: u64,
    pub detected_count: u64,
    /// Sifted length before the sample was removed.
    pub sifted_count: u64,
    pub sample_size: u64,
    pub qber_est: f64,
    pub low_confidence: bool,
    /// Share of the sifted bits Eve knows exactly.
    pub eve_known_fraction: f64,
    pub counts: SessionCounts,
}

/// Serialisable summary of a session without the keys themselves.
#[derive(Debug, Clone, Serialize)]
pub struct SessionMetadata {
    pub n_pulses: u64,
    pub seed: u64,
    pub detected_count: u64,
    pub sifted_count: u64,
    pub sample_size: u64,
    pub key_length: u64,
    pub qber_est: f64,
    pub low_confidence: bool,
    pub eve_known_fraction: f64,
    pub counts: SessionCounts,
}

impl SessionResult {
    pub fn metadata(&self, seed: u64) -> SessionMetadata {
        SessionMetadata {
            n_pulses: self.n_pulses,
            seed,
            detected_count: self.detected_count,
            sifted_count: self.sifted_count,
            sample_size: self.sample_size,
            key_length: self.alice_sifted.len() as u64,
            qber_est: self.qber_est,
            low_confidence: self.low_confidence,
            eve_known_fraction: self.eve_known_fraction,
            counts: self.counts,
        }
    }
}

/// One pulse on which Bob's gate fired.
#[derive(Debug, Clone, Copy)]
struct Click {
    alice: AliceRecord,
    bob: BobRecord,
    signal: bool,
    multiphoton: bool,
    eve_stored: bool,
}

#[derive(Default)]
struct BlockOutput {
    clicks: Vec<Click>,
    counts: SessionCounts,
}

/// Per-session constants of the pulse loop.
struct PulseModel {
    p_vacuum: f64,
    mu: f64,
    survival: f64,
    dark: f64,
    modulation_error: f64,
    pns: bool,
}

impl PulseModel {
    fn new(cfg: &SimConfig) -> Self {
        let mu = cfg.source.mu();
        let (survival, pns) = match &cfg.eve {
            Some(eve) => (eve.replacement_transmission, true),
            None => (link::transmission(&cfg.channel) * cfg.detector.efficiency(), false),
        };
        Self {
            p_vacuum: (-mu).exp(),
            mu,
            survival,
            dark: cfg.detector.dark_prob(),
            modulation_error: cfg.detector.modulation_error(),
            pns,
        }
    }

    /// Poisson photon number by sequential inversion.
    fn photons<R: Rng>(&self, rng: &mut R) -> u32 {
        let u: f64 = rng.random();
        let mut p = self.p_vacuum;
        let mut cdf = p;
        let mut n = 0u32;
        while u >= cdf && p > 0.0 {
            n += 1;
            p *= self.mu / n as f64;
            cdf += p;
        }
        n
    }

    fn simulate_block(&self, seed: u64, block: u64, pulses: u64) -> BlockOutput {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(block);
        let mut out = BlockOutput::default();
        for _ in 0..pulses {
            let n = self.photons(&mut rng);
            let multiphoton = n >= 2;
            out.counts.multiphoton_pulses += u64::from(multiphoton);
            let (forwarded, eve_stored) = if self.pns {
                if multiphoton { (n - 1, true) } else { (0, false) }
            } else {
                (n, false)
            };
            let mut signal = false;
            for _ in 0..forwarded {
                if rng.random::<f64>() < self.survival {
                    signal = true;
                }
            }
            let dark = rng.random::<f64>() < self.dark;
            if !signal && !dark {
                continue;
            }
            let alice = AliceRecord {
                bit: rng.random(),
                basis: Basis::random(&mut rng),
            };
            let bob_basis = Basis::random(&mut rng);
            // A photon click takes precedence over a coincident dark count.
            let outcome = if signal && bob_basis == alice.basis {
                alice.bit ^ (rng.random::<f64>() < self.modulation_error)
            } else {
                rng.random()
            };
            if signal {
                out.counts.signal_detections += 1;
            } else {
                out.counts.dark_only_detections += 1;
            }
            out.clicks.push(Click {
                alice,
                bob: BobRecord {
                    basis: bob_basis,
                    outcome: Some(outcome),
                },
                signal,
                multiphoton,
                eve_stored,
            });
        }
        out
    }
}

/// Simulate a session: quantum transmission, sifting and QBER estimation.
/// Dispatches to [`run_session_with_pns`] when an eavesdropper is set.
pub fn run_session(cfg: &SimConfig) -> Result<SessionResult, EngineError> {
    cfg.validate()?;
    let model = PulseModel::new(cfg);
    let n_blocks = cfg.n_pulses.div_ceil(BLOCK_PULSES);
    let blocks: Vec<BlockOutput> = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let pulses = BLOCK_PULSES.min(cfg.n_pulses - b * BLOCK_PULSES);
            model.simulate_block(cfg.seed, b, pulses)
        })
        .collect();

    let mut counts = SessionCounts::default();
    let mut clicks = Vec::with_capacity(blocks.iter().map(|b| b.clicks.len()).sum());
    for block in blocks {
        counts.merge(&block.counts);
        clicks.extend(block.clicks);
    }

    let alice: Vec<AliceRecord> = clicks.iter().map(|c| c.alice).collect();
    let bob: Vec<BobRecord> = clicks.iter().map(|c| c.bob).collect();
    let kept = sift_indices(&alice, &bob)?;
    let mut alice_key = BitString::with_capacity(kept.len());
    let mut bob_key = BitString::with_capacity(kept.len());
    for &i in &kept {
        let c = &clicks[i];
        let (a, b) = (c.alice.bit, c.bob.outcome.unwrap_or_default());
        alice_key.push(a);
        bob_key.push(b);
        counts.sifted_signal += u64::from(c.signal);
        counts.sifted_multiphoton += u64::from(c.multiphoton);
        counts.sifted_eve_known += u64::from(c.eve_stored);
        counts.sifted_errors += u64::from(a != b);
    }

    let sifted_count = kept.len() as u64;
    let est = estimate_qber(&alice_key, &bob_key, cfg.sample_fraction, cfg.seed)?;
    Ok(SessionResult {
        alice_sifted: est.alice_key,
        bob_sifted: est.bob_key,
        n_pulses: cfg.n_pulses,
        detected_count: clicks.len() as u64,
        sifted_count,
        sample_size: est.sample_size as u64,
        qber_est: est.qber,
        low_confidence: est.low_confidence,
        eve_known_fraction: if sifted_count == 0 {
            0.0
        } else {
            counts.sifted_eve_known as f64 / sifted_count as f64
        },
        counts,
    })
}

/// Session under a photon-number-splitting attack.
pub fn run_session_with_pns(cfg: &SimConfig) -> Result<SessionResult, EngineError> {
    match cfg.eve {
        Some(EveConfig {
            strategy: EveStrategy::Pns,
            ..
        }) => run_session(cfg),
        None => Err(EngineError::Config("PNS session requested without an eavesdropper".into())),
    }
}

fn sift_indices(alice: &[AliceRecord], bob: &[BobRecord]) -> Result<Vec<usize>, EngineError> {
    if alice.len() != bob.len() {
        return Err(EngineError::LengthMismatch {
            alice: alice.len(),
            bob: bob.len(),
        });
    }
    Ok(alice
        .iter()
        .zip(bob)
        .enumerate()
        .filter(|(_, (a, b))| b.outcome.is_some() && a.basis == b.basis)
        .map(|(i, _)| i)
        .collect())
}

/// Keep the detected positions where both parties used the same basis.
pub fn sift(alice: &[AliceRecord], bob: &[BobRecord]) -> Result<(BitString, BitString), EngineError> {
    let kept = sift_indices(alice, bob)?;
    Ok((
        kept.iter().map(|&i| alice[i].bit).collect(),
        kept.iter().map(|&i| bob[i].outcome.unwrap_or_default()).collect(),
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct QberEstimate {
    pub qber: f64,
    pub sample_size: usize,
    pub low_confidence: bool,
    /// Keys with the disclosed positions removed.
    pub alice_key: BitString,
    pub bob_key: BitString,
}

/// Disclose a uniformly chosen sample of `round(n * sample_fraction)`
/// positions, estimate the error rate on it and drop it from both keys.
pub fn estimate_qber(
    alice: &BitString,
    bob: &BitString,
    sample_fraction: f64,
    seed: u64,
) -> Result<QberEstimate, EngineError> {
    if alice.len() != bob.len() {
        return Err(EngineError::LengthMismatch {
            alice: alice.len(),
            bob: bob.len(),
        });
    }
    if !(sample_fraction > 0.0 && sample_fraction < 1.0) {
        return Err(EngineError::Config(format!("sample_fraction {sample_fraction} outside (0, 1)")));
    }
    let n = alice.len();
    let k = ((n as f64 * sample_fraction).round() as usize).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(SAMPLE_STREAM);
    let mut disclosed = vec![false; n];
    for i in index::sample(&mut rng, n, k) {
        disclosed[i] = true;
    }
    let mismatches = (0..n).filter(|&i| disclosed[i] && alice.get(i) != bob.get(i)).count();
    let keep = |key: &BitString| (0..n).filter(|&i| !disclosed[i]).map(|i| key.get(i)).collect();
    Ok(QberEstimate {
        qber: if k == 0 { 0.0 } else { mismatches as f64 / k as f64 },
        sample_size: k,
        low_confidence: k < MIN_CONFIDENT_SAMPLE,
        alice_key: keep(alice),
        bob_key: keep(bob),
    })
}
