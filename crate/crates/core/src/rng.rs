//! Seeded, splittable randomness.
//!
//! Every random decision draws from a ChaCha8 stream keyed by the user seed
//! and a fixed stream id, so results never depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub(crate) const STREAM_PARTITION: u64 = 1;
pub(crate) const STREAM_SYNTH: u64 = 2;
pub(crate) const STREAM_SAMPLE: u64 = 3;

/// Selection streams are offset so every (level, segment) pair gets its own.
pub(crate) fn selection_stream(level: usize, segment: usize) -> u64 {
    (1u64 << 40) | ((level as u64) << 32) | segment as u64
}

pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
