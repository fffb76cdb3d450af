//! Seeded random streams.
//!
//! Every stochastic operation takes a [`GpRng`]. A run owns exactly one, so an
//! identical seed and configuration replays the same trajectory bit for bit.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Deterministic random stream used throughout a run.
#[derive(Clone, Debug)]
pub struct GpRng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl GpRng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// The seed this stream was created from.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Draws a child seed and returns an independent stream for it.
    ///
    /// Used to hand work items (individual training, bootstrap batches) their
    /// own stream before fanning out, so results do not depend on scheduling.
    pub fn fork(&mut self) -> GpRng {
        GpRng::new(self.inner.next_u64())
    }
}

impl RngCore for GpRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        self.inner.try_fill_bytes(dest)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable 64-bit hash of a `(label, index)` pair (FNV-1a, then a SplitMix64 finaliser).
///
/// Unlike `std::hash`, the value is fixed across platforms and toolchains, so
/// it is safe to persist seeds derived from it.
pub fn stable_hash(label: &str, index: u64) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET;
    for byte in label.bytes().chain(index.to_le_bytes()) {
        h ^= byte as u64;
        h = h.wrapping_mul(PRIME);
    }
    splitmix64(h)
}

/// Seed for one `(model, run)` task: `base ^ hash(model, run)`.
pub fn derive_seed(base: u64, label: &str, index: u64) -> u64 {
    base ^ stable_hash(label, index)
}
