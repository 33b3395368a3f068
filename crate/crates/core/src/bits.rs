//! Bit strings and their packed on-disk form.

use std::fmt;
use std::io::{self, Read, Write};

use serde::{Serialize, Serializer};

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct BitString {
    bits: Vec<bool>,
}

impl BitString {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn zeros(len: usize) -> Self {
        Self {
            bits: vec![false; len],
        }
    }

    pub fn with_capacity(cap: usize) -> Self {
        Self {
            bits: Vec::with_capacity(cap),
        }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn get(&self, i: usize) -> bool {
        self.bits[i]
    }

    pub fn set(&mut self, i: usize, v: bool) {
        self.bits[i] = v;
    }

    pub fn flip(&mut self, i: usize) {
        self.bits[i] = !self.bits[i];
    }

    pub fn push(&mut self, v: bool) {
        self.bits.push(v);
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.bits
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        self.bits.iter().copied()
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Number of positions where `self` and `other` differ.
    ///
    /// Panics if the lengths differ.
    pub fn hamming(&self, other: &BitString) -> usize {
        assert_eq!(self.len(), other.len(), "hamming distance of unequal lengths");
        self.iter().zip(other.iter()).filter(|(a, b)| a != b).count()
    }

    pub fn xor(&self, other: &BitString) -> BitString {
        assert_eq!(self.len(), other.len(), "xor of unequal lengths");
        self.iter().zip(other.iter()).map(|(a, b)| a ^ b).collect()
    }

    /// Packs into 64-bit words, first bit in the most significant position of
    /// the first word; the tail of the last word is zero.
    pub fn to_words(&self) -> Vec<u64> {
        self.bits
            .chunks(64)
            .map(|chunk| {
                chunk
                    .iter()
                    .enumerate()
                    .fold(0u64, |w, (i, &b)| w | (u64::from(b) << (63 - i)))
            })
            .collect()
    }

    /// Packed bytes, most significant bit first.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.bits
            .chunks(8)
            .map(|chunk| {
                chunk
                    .iter()
                    .enumerate()
                    .fold(0u8, |w, (i, &b)| w | (u8::from(b) << (7 - i)))
            })
            .collect()
    }

    pub fn from_bytes(bytes: &[u8], len: usize) -> Option<Self> {
        if bytes.len() != len.div_ceil(8) {
            return None;
        }
        Some((0..len).map(|i| bytes[i / 8] >> (7 - i % 8) & 1 == 1).collect())
    }

    /// Writes the key-file format: 8-byte big-endian bit length followed by
    /// the packed bits.
    pub fn write_packed<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(&(self.len() as u64).to_be_bytes())?;
        w.write_all(&self.to_bytes())
    }

    pub fn read_packed<R: Read>(mut r: R) -> io::Result<Self> {
        let mut header = [0u8; 8];
        r.read_exact(&mut header)?;
        let len = usize::try_from(u64::from_be_bytes(header))
            .map_err(|_| io::Error::new(io::ErrorKind::InvalidData, "bit length overflows usize"))?;
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes, len)
            .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidData, "payload does not match bit length"))
    }
}

impl FromIterator<bool> for BitString {
    fn from_iter<I: IntoIterator<Item = bool>>(iter: I) -> Self {
        Self {
            bits: iter.into_iter().collect(),
        }
    }
}

impl From<Vec<bool>> for BitString {
    fn from(bits: Vec<bool>) -> Self {
        Self { bits }
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.iter() {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl Serialize for BitString {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}
