//! Cascade error reconciliation as an explicit exchange between Alice, who
//! answers parity queries on her key, and Bob, who drives the protocol and
//! corrects his key.
//!
//! Pass `p` uses blocks of `ceil(0.73 / e) * 2^p` bits over a seeded random
//! permutation of the key (the first pass uses the identity). Odd-parity
//! blocks are bisected to a single error; every correction is cascaded back
//! into the blocks of all earlier passes that contain the flipped bit.
//! Alice's parities never change, so a parity disclosed once is cached and
//! never requested again.

use std::collections::{BTreeSet, HashMap};
use std::io::{self, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::PostprocessError;
use crate::bits::BitString;
use crate::rate::binary_entropy;

pub const DEFAULT_PASSES: usize = 4;
/// First-pass block size is `ceil(FIRST_BLOCK_CONSTANT / e)`.
pub const FIRST_BLOCK_CONSTANT: f64 = 0.73;
pub const MIN_KEY_BITS: usize = 1000;
/// Size of the final equality check, in disclosed bits.
pub const VERIFICATION_BITS: u64 = 64;
/// Stream of the verification-hash key; pass permutations use streams 0..passes.
const VERIFY_STREAM: u64 = u64::MAX;

/// One parity disclosed by Alice: the parity of positions `start..end` of
/// her key in the order of `pass`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ParityExchange {
    pub pass: usize,
    pub start: usize,
    pub end: usize,
    pub parity: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReconciliationReport {
    /// Bob's key after reconciliation.
    pub corrected_key: BitString,
    /// Parity bits disclosed; equals the transcript length.
    pub leakage_bits: u64,
    /// Bits disclosed by the final equality check.
    pub verification_bits: u64,
    pub passes: usize,
    pub corrections: u64,
    /// `leakage_bits / (n H2(e_est))`.
    pub measured_efficiency: f64,
    #[serde(skip)]
    pub transcript: Vec<ParityExchange>,
}

impl ReconciliationReport {
    pub fn total_leakage(&self) -> u64 {
        self.leakage_bits + self.verification_bits
    }
}

/// Write the transcript as one `pass start end parity` line per exchange.
pub fn write_transcript<W: Write>(transcript: &[ParityExchange], mut w: W) -> io::Result<()> {
    writeln!(w, "# pass start end parity")?;
    for x in transcript {
        writeln!(w, "{} {} {} {}", x.pass, x.start, x.end, u8::from(x.parity))?;
    }
    Ok(())
}

/// Parity queries Bob sends during a run.
trait ParitySource {
    fn parity(&mut self, pass: usize, start: usize, end: usize) -> Result<bool, PostprocessError>;
}

/// Public per-run layout shared by both parties: block sizes and the
/// permutation of every pass.
struct Layout {
    block_sizes: Vec<usize>,
    /// `order[p][i]` is the key index at position `i` of pass `p`.
    order: Vec<Vec<usize>>,
    /// `position[p][j]` is the position of key index `j` in pass `p`.
    position: Vec<Vec<usize>>,
}

impl Layout {
    fn new(n: usize, e_est: f64, passes: usize, seed: u64) -> Self {
        let k1 = ((FIRST_BLOCK_CONSTANT / e_est).ceil() as usize).clamp(1, n);
        let mut block_sizes = Vec::with_capacity(passes);
        let mut order = Vec::with_capacity(passes);
        let mut position = Vec::with_capacity(passes);
        for p in 0..passes {
            block_sizes.push(k1.saturating_mul(1 << p).min(n));
            let mut perm: Vec<usize> = (0..n).collect();
            if p > 0 {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(p as u64);
                perm.shuffle(&mut rng);
            }
            let mut inv = vec![0; n];
            for (i, &j) in perm.iter().enumerate() {
                inv[j] = i;
            }
            order.push(perm);
            position.push(inv);
        }
        Self {
            block_sizes,
            order,
            position,
        }
    }

    fn block_range(&self, pass: usize, block: usize, n: usize) -> (usize, usize) {
        let k = self.block_sizes[pass];
        (block * k, ((block + 1) * k).min(n))
    }

    fn parity(&self, key: &BitString, pass: usize, start: usize, end: usize) -> bool {
        self.order[pass][start..end]
            .iter()
            .fold(false, |acc, &j| acc ^ key.get(j))
    }
}

/// Alice's side: answers parity requests on her fixed key.
struct Alice<'a> {
    key: &'a BitString,
    layout: &'a Layout,
    transcript: Vec<ParityExchange>,
}

impl ParitySource for Alice<'_> {
    fn parity(&mut self, pass: usize, start: usize, end: usize) -> Result<bool, PostprocessError> {
        let parity = self.layout.parity(self.key, pass, start, end);
        self.transcript.push(ParityExchange {
            pass,
            start,
            end,
            parity,
        });
        Ok(parity)
    }
}

/// Replays recorded answers in order, checking Bob asks the same questions.
struct Replay<'a> {
    transcript: &'a [ParityExchange],
    next: usize,
}

impl ParitySource for Replay<'_> {
    fn parity(&mut self, pass: usize, start: usize, end: usize) -> Result<bool, PostprocessError> {
        let x = self
            .transcript
            .get(self.next)
            .ok_or(PostprocessError::TranscriptMismatch(self.next))?;
        if (x.pass, x.start, x.end) != (pass, start, end) {
            return Err(PostprocessError::TranscriptMismatch(self.next));
        }
        self.next += 1;
        Ok(x.parity)
    }
}

/// Bob's side of the protocol.
struct Bob<'a, S> {
    key: BitString,
    layout: &'a Layout,
    alice: S,
    known: HashMap<(usize, usize, usize), bool>,
    corrections: u64,
}

impl<S: ParitySource> Bob<'_, S> {
    fn alice_parity(&mut self, pass: usize, start: usize, end: usize) -> Result<bool, PostprocessError> {
        if let Some(&p) = self.known.get(&(pass, start, end)) {
            return Ok(p);
        }
        let p = self.alice.parity(pass, start, end)?;
        self.known.insert((pass, start, end), p);
        Ok(p)
    }

    fn is_odd(&self, pass: usize, block: usize) -> bool {
        let n = self.key.len();
        let (s, e) = self.layout.block_range(pass, block, n);
        let alice = self.known[&(pass, s, e)];
        alice != self.layout.parity(&self.key, pass, s, e)
    }

    /// Bisect an odd block down to the erroneous bit and return its key index.
    fn locate(&mut self, pass: usize, mut start: usize, mut end: usize) -> Result<usize, PostprocessError> {
        let mut alice_whole = self.known[&(pass, start, end)];
        while end - start > 1 {
            let mid = start + (end - start) / 2;
            let alice_left = self.alice_parity(pass, start, mid)?;
            let bob_left = self.layout.parity(&self.key, pass, start, mid);
            if alice_left != bob_left {
                end = mid;
                alice_whole = alice_left;
            } else {
                alice_whole ^= alice_left;
                start = mid;
                self.known.entry((pass, start, end)).or_insert(alice_whole);
            }
        }
        Ok(self.layout.order[pass][start])
    }

    /// Run all passes; hands back the parity source with the corrected key.
    fn run(mut self, passes: usize) -> Result<(BitString, u64, S), PostprocessError> {
        let n = self.key.len();
        for pass in 0..passes {
            let k = self.layout.block_sizes[pass];
            let mut odd = BTreeSet::new();
            for block in 0..n.div_ceil(k) {
                let (s, e) = self.layout.block_range(pass, block, n);
                self.alice_parity(pass, s, e)?;
                if self.is_odd(pass, block) {
                    odd.insert((pass, block));
                }
            }
            while let Some((p, block)) = odd.pop_first() {
                if !self.is_odd(p, block) {
                    continue;
                }
                let (s, e) = self.layout.block_range(p, block, n);
                let j = self.locate(p, s, e)?;
                self.key.flip(j);
                self.corrections += 1;
                for q in 0..=pass {
                    let b = self.layout.position[q][j] / self.layout.block_sizes[q];
                    if self.is_odd(q, b) {
                        odd.insert((q, b));
                    } else {
                        odd.remove(&(q, b));
                    }
                }
            }
        }
        Ok((self.key, self.corrections, self.alice))
    }
}

fn validate(key_a: &BitString, key_b: &BitString, e_est: f64) -> Result<(), PostprocessError> {
    if key_a.len() != key_b.len() {
        return Err(PostprocessError::LengthMismatch(key_a.len(), key_b.len()));
    }
    if key_a.len() < MIN_KEY_BITS {
        return Err(PostprocessError::KeyTooShort(key_a.len()));
    }
    if !(e_est > 0.0 && e_est < 0.5) {
        return Err(PostprocessError::InvalidErrorEstimate(e_est));
    }
    Ok(())
}

/// Reconcile Bob's key `key_b` with Alice's `key_a` using the standard
/// four-pass schedule.
pub fn cascade_reconcile(
    key_a: &BitString,
    key_b: &BitString,
    e_est: f64,
    seed: u64,
) -> Result<ReconciliationReport, PostprocessError> {
    cascade_reconcile_with_passes(key_a, key_b, e_est, seed, DEFAULT_PASSES)
}

pub fn cascade_reconcile_with_passes(
    key_a: &BitString,
    key_b: &BitString,
    e_est: f64,
    seed: u64,
    passes: usize,
) -> Result<ReconciliationReport, PostprocessError> {
    validate(key_a, key_b, e_est)?;
    let n = key_a.len();
    let layout = Layout::new(n, e_est, passes, seed);
    let bob = Bob {
        key: key_b.clone(),
        layout: &layout,
        alice: Alice {
            key: key_a,
            layout: &layout,
            transcript: Vec::new(),
        },
        known: HashMap::new(),
        corrections: 0,
    };
    let (corrected, corrections, alice) = bob.run(passes)?;
    let transcript = alice.transcript;

    if verification_hash(key_a, seed) != verification_hash(&corrected, seed) {
        return Err(PostprocessError::ResidualErrors {
            remaining: key_a.hamming(&corrected),
        });
    }
    let leakage = transcript.len() as u64;
    Ok(ReconciliationReport {
        corrected_key: corrected,
        leakage_bits: leakage,
        verification_bits: VERIFICATION_BITS,
        passes,
        corrections,
        measured_efficiency: leakage as f64 / (n as f64 * binary_entropy(e_est)),
        transcript,
    })
}

/// Rebuild Bob's corrected key from his raw key and a recorded transcript.
pub fn replay_transcript(
    key_b: &BitString,
    transcript: &[ParityExchange],
    e_est: f64,
    seed: u64,
    passes: usize,
) -> Result<BitString, PostprocessError> {
    if key_b.len() < MIN_KEY_BITS {
        return Err(PostprocessError::KeyTooShort(key_b.len()));
    }
    if !(e_est > 0.0 && e_est < 0.5) {
        return Err(PostprocessError::InvalidErrorEstimate(e_est));
    }
    let layout = Layout::new(key_b.len(), e_est, passes, seed);
    let bob = Bob {
        key: key_b.clone(),
        layout: &layout,
        alice: Replay {
            transcript,
            next: 0,
        },
        known: HashMap::new(),
        corrections: 0,
    };
    let (key, ..) = bob.run(passes)?;
    Ok(key)
}

/// 64-bit polynomial hash over GF(2^64) at a seeded evaluation point.
pub fn verification_hash(key: &BitString, seed: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(VERIFY_STREAM);
    let point = rng.random::<u64>() | 1;
    let mut h = 0u64;
    for w in key.to_words() {
        h = gf64_mul(h ^ w, point);
    }
    gf64_mul(h ^ key.len() as u64, point)
}

/// Multiplication in GF(2^64) modulo x^64 + x^4 + x^3 + x + 1.
pub fn gf64_mul(a: u64, b: u64) -> u64 {
    let (mut hi, mut lo) = (0u64, 0u64);
    for i in 0..64 {
        if (b >> i) & 1 == 1 {
            lo ^= a << i;
            if i > 0 {
                hi ^= a >> (64 - i);
            }
        }
    }
    let t = hi ^ (hi >> 63) ^ (hi >> 61) ^ (hi >> 60);
    lo ^ t ^ (t << 1) ^ (t << 3) ^ (t << 4)
}
