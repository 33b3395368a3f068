//! Privacy amplification with a random Toeplitz matrix over GF(2).
//!
//! The `m x n` matrix is `T[i][j] = s[i - j + n - 1]` for `n + m - 1`
//! seeded uniform bits `s`. Row `i` read left to right is a window of the
//! reversed sequence, so each output bit is the parity of the key ANDed with
//! a shifted window, computed a word at a time.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::PostprocessError;
use crate::bits::BitString;

/// Output lengths below this are hashed on the calling thread.
const PARALLEL_ROWS: usize = 256;

/// The `n + m - 1` bits defining the matrix, in diagonal order.
pub fn toeplitz_diagonal(n: usize, m: usize, seed: u64) -> BitString {
    let len = (n + m).saturating_sub(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.random::<bool>()).collect()
}

/// Compress `key` to `m` bits.
pub fn toeplitz_hash(key: &BitString, m: usize, seed: u64) -> Result<BitString, PostprocessError> {
    let n = key.len();
    if m > n {
        return Err(PostprocessError::OutputTooLong { m, n });
    }
    if m == 0 {
        return Ok(BitString::new());
    }
    let diagonal = toeplitz_diagonal(n, m, seed);
    let reversed: BitString = diagonal.as_slice().iter().rev().copied().collect();
    let mut window = reversed.to_words();
    window.push(0);
    let key_words = key.to_words();

    let row = |i: usize| -> bool {
        let offset = m - 1 - i;
        let (w0, shift) = (offset / 64, offset % 64);
        let mut acc = 0u64;
        for (k, &kw) in key_words.iter().enumerate() {
            let w = if shift == 0 {
                window[w0 + k]
            } else {
                (window[w0 + k] << shift) | (window[w0 + k + 1] >> (64 - shift))
            };
            acc ^= w & kw;
        }
        acc.count_ones() & 1 == 1
    };

    let bits: Vec<bool> = if m >= PARALLEL_ROWS {
        (0..m).into_par_iter().map(row).collect()
    } else {
        (0..m).map(row).collect()
    };
    Ok(BitString::from(bits))
}
