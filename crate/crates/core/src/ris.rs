//! Binary RIS configurations and the composed attacker channel.
//!
//! Bit `0` selects reflection coefficient `+1`, bit `1` selects `-1`. This
//! mapping is used everywhere in the crate.

use std::fmt;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::rng;

/// Largest element count [`enumerate_configs`] accepts.
pub const MAX_ENUMERATION_BITS: usize = 20;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RisError {
    #[error("length mismatch: configuration has {config} elements, other side has {other}")]
    LengthMismatch { config: usize, other: usize },
    #[error("a configuration needs at least one element")]
    Empty,
    #[error("enumeration is limited to {MAX_ENUMERATION_BITS} elements, got {0}")]
    TooManyElements(usize),
    #[error("malformed hex configuration: {0}")]
    BadHex(String),
}

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct RisConfig {
    len: usize,
    words: Vec<u64>,
}

impl RisConfig {
    /// All elements at `+1`.
    pub fn zeros(len: usize) -> Self {
        Self { len, words: vec![0; len.div_ceil(64)] }
    }

    pub fn from_bits(bits: &[bool]) -> Self {
        let mut c = Self::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            c.set(i, b);
        }
        c
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn bit(&self, l: usize) -> bool {
        assert!(l < self.len, "element {l} out of range");
        self.words[l / 64] >> (l % 64) & 1 == 1
    }

    pub fn set(&mut self, l: usize, value: bool) {
        assert!(l < self.len, "element {l} out of range");
        let mask = 1u64 << (l % 64);
        if value {
            self.words[l / 64] |= mask;
        } else {
            self.words[l / 64] &= !mask;
        }
    }

    pub fn flip(&mut self, l: usize) {
        assert!(l < self.len, "element {l} out of range");
        self.words[l / 64] ^= 1u64 << (l % 64);
    }

    /// Reflection coefficient of element `l`.
    pub fn coefficient(&self, l: usize) -> f64 {
        if self.bit(l) {
            -1.0
        } else {
            1.0
        }
    }

    pub fn bits(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(|l| self.bit(l))
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn complement(&self) -> Self {
        let mut c = self.clone();
        for w in &mut c.words {
            *w = !*w;
        }
        c.clear_padding();
        c
    }

    fn clear_padding(&mut self) {
        let rem = self.len % 64;
        if rem != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << rem) - 1;
            }
        }
    }

    pub(crate) fn words(&self) -> &[u64] {
        &self.words
    }

    /// Hex digits, four elements per digit, element `4i` in the most
    /// significant position of digit `i`. Unused trailing positions are zero.
    pub fn to_hex(&self) -> String {
        let digits = self.len.div_ceil(4);
        let mut s = String::with_capacity(digits);
        for d in 0..digits {
            let mut nibble = 0u32;
            for k in 0..4 {
                let l = 4 * d + k;
                if l < self.len && self.bit(l) {
                    nibble |= 1 << (3 - k);
                }
            }
            s.push(char::from_digit(nibble, 16).expect("nibble < 16"));
        }
        s
    }

    pub fn from_hex(hex: &str, len: usize) -> Result<Self, RisError> {
        if hex.len() != len.div_ceil(4) {
            return Err(RisError::BadHex(format!("expected {} digits for {len} elements, got {}", len.div_ceil(4), hex.len())));
        }
        let mut c = Self::zeros(len);
        for (d, ch) in hex.chars().enumerate() {
            let nibble = ch.to_digit(16).ok_or_else(|| RisError::BadHex(format!("invalid digit `{ch}`")))?;
            for k in 0..4 {
                if nibble >> (3 - k) & 1 == 1 {
                    let l = 4 * d + k;
                    if l >= len {
                        return Err(RisError::BadHex("non-zero padding bits".into()));
                    }
                    c.set(l, true);
                }
            }
        }
        Ok(c)
    }
}

impl fmt::Debug for RisConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "RisConfig({}:{})", self.len, self.to_hex())
    }
}

#[derive(Serialize, Deserialize)]
struct HexForm {
    length: usize,
    hex: String,
}

impl Serialize for RisConfig {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        HexForm { length: self.len, hex: self.to_hex() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for RisConfig {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let form = HexForm::deserialize(d)?;
        RisConfig::from_hex(&form.hex, form.length).map_err(serde::de::Error::custom)
    }
}

/// `sum_l h_l c_l`.
pub fn compose_channel(config: &RisConfig, subchannels: &[Complex64]) -> Result<Complex64, RisError> {
    if config.len() != subchannels.len() {
        return Err(RisError::LengthMismatch { config: config.len(), other: subchannels.len() });
    }
    let mut acc = Complex64::new(0.0, 0.0);
    for (w, chunk) in config.words().iter().zip(subchannels.chunks(64)) {
        for (k, h) in chunk.iter().enumerate() {
            if w >> k & 1 == 1 {
                acc -= h;
            } else {
                acc += h;
            }
        }
    }
    Ok(acc)
}

/// I.i.d. fair bits.
pub fn random_config_with(len: usize, rng: &mut impl Rng) -> Result<RisConfig, RisError> {
    if len == 0 {
        return Err(RisError::Empty);
    }
    let mut c = RisConfig::zeros(len);
    for w in &mut c.words {
        *w = rng.random();
    }
    c.clear_padding();
    Ok(c)
}

pub fn random_config(len: usize, seed: u64) -> Result<RisConfig, RisError> {
    random_config_with(len, &mut rng::stream(seed, "random-config", 0))
}

pub fn hamming_distance(a: &RisConfig, b: &RisConfig) -> Result<usize, RisError> {
    if a.len() != b.len() {
        return Err(RisError::LengthMismatch { config: a.len(), other: b.len() });
    }
    Ok(a.words().iter().zip(b.words()).map(|(x, y)| (x ^ y).count_ones() as usize).sum())
}

/// Every configuration of `len` elements, in lexicographic order of the bit
/// string `b_0 b_1 ... b_{L-1}`.
pub fn enumerate_configs(len: usize) -> Result<impl Iterator<Item = RisConfig>, RisError> {
    if len > MAX_ENUMERATION_BITS {
        return Err(RisError::TooManyElements(len));
    }
    Ok((0u64..1 << len).map(move |k| {
        let mut c = RisConfig::zeros(len);
        for l in 0..len {
            if k >> (len - 1 - l) & 1 == 1 {
                c.set(l, true);
            }
        }
        c
    }))
}
