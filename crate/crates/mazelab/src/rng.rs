//! Seeding helpers.
//!
//! All randomness in the crate flows through ChaCha8 generators keyed by an
//! explicit 64-bit seed plus a stream id, so that independent consumers
//! (maze generation, wind rolls, action sampling, ...) never share a stream
//! and replays stay stable when one consumer draws more or fewer values.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream ids for the per-seed ChaCha streams.
pub mod stream {
    pub const MAZE_GEN: u64 = 0;
    pub const WIND: u64 = 1;
    pub const ACTIONS: u64 = 2;
    pub const SHUFFLE: u64 = 3;
    pub const SYNTH: u64 = 4;
    pub const MODEL_INIT: u64 = 5;
}

/// A ChaCha8 generator on stream `stream` of `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Deterministically mixes a seed with a tag (splitmix64 finalizer),
/// used to derive per-episode / per-cell sub-seeds.
pub fn mix(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
