//! Seeded, splittable randomness.
//!
//! Every stochastic step of a run draws from a ChaCha20 substream keyed by the
//! run's master seed and a stream id, so a `(seed, stream)` pair fully
//! determines the draws regardless of platform or thread scheduling.

use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};

use crate::scalar::Scalar;

pub const ALGORITHM: &str = "chacha20";

#[derive(Clone, Debug)]
pub struct SeededRng {
    seed: u64,
    stream: u64,
    inner: ChaCha20Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self::substream_of(seed, 0)
    }

    fn substream_of(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha20Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self {
            seed,
            stream,
            inner,
        }
    }

    /// Independent generator for `stream`, derived from the master seed only.
    pub fn substream(&self, stream: u64) -> Self {
        Self::substream_of(self.seed, stream)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    pub fn algorithm(&self) -> &'static str {
        ALGORITHM
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform draw in `[0, 1)`.
    pub fn unit<T: Scalar>(&mut self) -> T {
        T::unit_from_bits(self.inner.next_u64())
    }
}
