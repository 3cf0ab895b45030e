//! Deterministic, label-addressed random streams.
//!
//! A [`RandomStream`] is a ChaCha8 keystream keyed by a 64-bit seed and
//! positioned on a 64-bit stream id. ChaCha is counter based, so a stream's
//! draws depend only on `(seed, stream_id)` and never on how many other
//! streams were consumed before it, or on which thread consumes it.
//!
//! Substreams are derived by hashing the parent id with a label:
//!
//! ```text
//! child_id = mix64(parent_id.rotate_left(23) ^ mix64(label ^ 0x9e37_79b9_7f4a_7c15))
//! ```
//!
//! where `mix64` is the SplitMix64 finalizer. Multi-part labels (iteration,
//! batch slot, purpose) are folded left to right.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Purpose tags folded into substream labels.
pub mod purpose {
    pub const BATCH: u64 = 0x01;
    pub const OUTPUT_INDEX: u64 = 0x02;
    pub const CHECKPOINT: u64 = 0x03;
    pub const WARM_START: u64 = 0x04;
    pub const MONTE_CARLO: u64 = 0x05;
    pub const AUDIT: u64 = 0x06;
    pub const PROBE_POINTS: u64 = 0x07;
    pub const DATA: u64 = 0x08;
    pub const SEED_SWEEP: u64 = 0x09;
}

/// SplitMix64 output finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn derive_id(parent: u64, label: u64) -> u64 {
    mix64(parent.rotate_left(23) ^ mix64(label ^ 0x9e37_79b9_7f4a_7c15))
}

/// Single-consumer random stream identified by `(seed, stream_id)`.
#[derive(Debug, Clone)]
pub struct RandomStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RandomStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self { seed, stream_id, rng }
    }

    /// Root stream (`stream_id = 0`) for a seed.
    pub fn from_seed(seed: u64) -> Self {
        Self::new(seed, 0)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Fresh substream whose id is derived from this stream's id and `labels`.
    /// Does not consume any draws from `self`.
    pub fn derive(&self, labels: &[u64]) -> RandomStream {
        let id = labels.iter().fold(self.stream_id, |acc, &l| derive_id(acc, l));
        RandomStream::new(self.seed, id)
    }

    /// Uniform on `[0, 1)` with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    /// Uniform integer in `0..n`; `n` must be positive.
    pub fn below(&mut self, n: u64) -> u64 {
        self.rng.random_range(0..n)
    }
}

impl RngCore for RandomStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}
