//! Seeded, splittable random streams.
//!
//! Every random draw goes through a ChaCha8 stream identified by a
//! `(seed, stream)` pair. The full generator position is exported as an
//! [`RngState`] so sessions can be persisted and resumed exactly.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{AuditError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    pub stream: u64,
    pub word_pos: u64,
}

#[derive(Debug, Clone)]
pub struct AuditRng {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

impl AuditRng {
    pub fn new(seed: u64) -> Self {
        Self::split(seed, 0)
    }

    /// Independent stream `stream` under `seed`.
    pub fn split(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self {
            seed,
            stream,
            inner,
        }
    }

    pub fn state(&self) -> RngState {
        RngState {
            seed: self.seed,
            stream: self.stream,
            word_pos: u64::try_from(self.inner.get_word_pos())
                .expect("stream position exceeds 2^64 words"),
        }
    }

    pub fn from_state(state: RngState) -> Self {
        let mut rng = Self::split(state.seed, state.stream);
        rng.inner.set_word_pos(u128::from(state.word_pos));
        rng
    }

    /// Uniform draw on `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform draw on `[lo, hi]`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> Result<f64> {
        if !(lo <= hi) {
            return Err(AuditError::Config(format!("empty range [{lo}, {hi}]")));
        }
        Ok(lo + (hi - lo) * self.unit())
    }
}

impl RngCore for AuditRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// Mixes a master seed with an index into a fresh 64-bit seed (splitmix64).
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
