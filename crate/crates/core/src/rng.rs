//! The random source behind every synthetic fixture.
//!
//! All draws are derived from ChaCha with 8 rounds so that another
//! implementation can reproduce corpora exactly:
//!
//! * key: the 64-bit seed in little-endian order in bytes `0..8` of the
//!   32-byte key, remaining bytes zero;
//! * stream: a 64-bit stream id (the sample index for corpora, `0` for
//!   toy attention layers), block counter starting at zero;
//! * `next_u64`: two consecutive 32-bit output words, the first one as the
//!   low half;
//! * uniform in `[0, 1)`: `(next_u64 >> 11) * 2^-53`;
//! * standard normal: Box-Muller on a pair `(u1, u2)` of uniforms, returning
//!   `sqrt(-2 ln(1 - u1)) * cos(2 pi u2)` first and the matching `sin` value
//!   on the next call;
//! * integer below `m`: `floor(uniform * m)`.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct SynthRng {
    inner: ChaCha8Rng,
    spare_normal: Option<f64>,
}

impl SynthRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        let mut inner = ChaCha8Rng::from_seed(key);
        inner.set_stream(stream);
        Self {
            inner,
            spare_normal: None,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let u1 = self.uniform();
        let u2 = self.uniform();
        let radius = (-2.0 * (1.0 - u1).ln()).sqrt();
        let angle = std::f64::consts::TAU * u2;
        self.spare_normal = Some(radius * angle.sin());
        radius * angle.cos()
    }

    pub fn below(&mut self, bound: usize) -> usize {
        ((self.uniform() * bound as f64) as usize).min(bound.saturating_sub(1))
    }
}
