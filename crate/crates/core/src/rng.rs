//! Seeded random streams.
//!
//! Every source of randomness draws from its own ChaCha stream derived
//! from a single seed, so switching a task off does not shift the random
//! numbers seen by the others.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SeededRng = ChaCha8Rng;

/// Independent concerns that consume randomness.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Init = 1,
    Batch = 2,
    Crop = 3,
    Mask = 4,
    Augment = 5,
    Neighborhood = 6,
    Probe = 7,
    Synthetic = 8,
}

pub fn stream_rng(seed: u64, stream: Stream) -> SeededRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

pub fn seeded(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}
