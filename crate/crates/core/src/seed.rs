//! Deterministic sub-seed derivation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Combine an episode seed with a stream tag and an index.
pub fn derive(seed: u64, stream: u64, index: u64) -> u64 {
    mix64(mix64(seed ^ mix64(stream)) ^ index)
}

pub fn rng(seed: u64, stream: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, stream, index))
}

pub const STREAM_SPAWN: u64 = 1;
pub const STREAM_GAMMA: u64 = 2;
pub const STREAM_LATENCY_SEL: u64 = 3;
pub const STREAM_LATENCY_DEC: u64 = 4;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_distinct() {
        assert_ne!(derive(7, STREAM_GAMMA, 0), derive(7, STREAM_SPAWN, 0));
        assert_ne!(derive(7, STREAM_GAMMA, 0), derive(7, STREAM_GAMMA, 1));
        assert_eq!(derive(7, STREAM_GAMMA, 3), derive(7, STREAM_GAMMA, 3));
    }
}
