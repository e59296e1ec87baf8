//! Splittable counter-based PRNG.
//!
//! A key is two 64-bit words `(hi, lo)`. Every derived value is produced by
//! one function of `(key, counter)`:
//!
//! ```text
//! mix64(z)        = SplitMix64 finalizer
//! block(key, ctr) = mix64( mix64(hi + ctr * 0x9E3779B97F4A7C15) ^ lo )
//! ```
//!
//! All arithmetic wraps. For a fixed key `block` is injective in `ctr`.
//! The counter space is partitioned by its two top bits:
//!
//! * `00…` draws: the `i`-th value of a key's stream is `block(key, i)`;
//! * `10…` splits: child `i` is `(block(key, S|2i), block(key, S|2i+1))`
//!   with `S = 1 << 63`;
//! * `01…` fold-in: `fold_in(d)` is `(block(key, F|2d'), block(key, F|2d'+1))`
//!   with `F = 1 << 62` and `d' = d mod 2^61`.
//!
//! Streams are bit-identical on every platform.

use serde::{Deserialize, Serialize};

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const SPLIT_DOMAIN: u64 = 1 << 63;
const FOLD_DOMAIN: u64 = 1 << 62;
const FOLD_MASK: u64 = (1 << 61) - 1;
const DRAW_MASK: u64 = (1 << 62) - 1;

/// SplitMix64 output finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PrngKey {
    pub hi: u64,
    pub lo: u64,
}

impl PrngKey {
    pub const fn from_words(hi: u64, lo: u64) -> Self {
        Self { hi, lo }
    }

    /// `(mix64(seed), mix64(seed ^ GAMMA))`.
    pub fn from_seed(seed: u64) -> Self {
        Self { hi: mix64(seed), lo: mix64(seed ^ GAMMA) }
    }

    #[inline]
    fn block(&self, ctr: u64) -> u64 {
        mix64(mix64(self.hi.wrapping_add(ctr.wrapping_mul(GAMMA))) ^ self.lo)
    }

    /// First 64-bit draw of this key's stream.
    #[inline]
    pub fn bits(&self) -> u64 {
        self.block(0)
    }

    /// Child `i` of an n-way split. `split(n)[i] == child(i)` for any `n > i`.
    #[inline]
    pub fn child(&self, i: u64) -> PrngKey {
        let base = SPLIT_DOMAIN | (i.wrapping_mul(2) & !SPLIT_DOMAIN);
        PrngKey { hi: self.block(base), lo: self.block(base | 1) }
    }

    pub fn split(&self, n: usize) -> Vec<PrngKey> {
        (0..n as u64).map(|i| self.child(i)).collect()
    }

    #[inline]
    pub fn split2(&self) -> (PrngKey, PrngKey) {
        (self.child(0), self.child(1))
    }

    /// Deterministically derives a key from this one and a piece of data,
    /// e.g. a lane or step index.
    #[inline]
    pub fn fold_in(&self, data: u64) -> PrngKey {
        let base = FOLD_DOMAIN | ((data & FOLD_MASK) << 1);
        PrngKey { hi: self.block(base), lo: self.block(base | 1) }
    }

    /// Uniform index in `0..n` by multiply-shift reduction of one draw:
    /// `(bits * n) >> 64`. Bias is at most `n / 2^64` per outcome.
    #[inline]
    pub fn uniform_index(&self, n: usize) -> usize {
        reduce(self.bits(), n)
    }

    pub fn stream(&self) -> PrngStream {
        PrngStream { key: *self, counter: 0 }
    }
}

#[inline]
pub fn reduce(draw: u64, n: usize) -> usize {
    ((draw as u128 * n as u128) >> 64) as usize
}

/// Sequential reader over a key's draw stream.
#[derive(Debug, Clone)]
pub struct PrngStream {
    key: PrngKey,
    counter: u64,
}

impl PrngStream {
    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let v = self.key.block(self.counter & DRAW_MASK);
        self.counter += 1;
        v
    }

    #[inline]
    pub fn below(&mut self, n: usize) -> usize {
        reduce(self.next_u64(), n)
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    #[inline]
    pub fn next_bool(&mut self) -> bool {
        self.next_u64() >> 63 == 1
    }
}
