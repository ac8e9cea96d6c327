//! Deterministic seed derivation for parallel substreams.
//!
//! Every random draw in the library comes from a ChaCha stream whose seed
//! is a splitmix64 hash of (master seed, structural tags). Substreams are
//! therefore independent of scheduling and thread count: a task's stream
//! depends only on its identity, never on execution order.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// One round of the splitmix64 output permutation.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hash a master seed and structural tags into a single substream seed.
pub fn mix(seed: u64, tags: &[u64]) -> u64 {
    let mut acc = splitmix64(seed ^ 0x517c_c1b7_2722_0a95);
    for &t in tags {
        acc = splitmix64(acc ^ splitmix64(t.wrapping_add(0xd6e8_feb8_6659_fd93)));
    }
    acc
}

/// ChaCha8 stream keyed by (seed, tags); cheap to construct per task.
pub fn stream(seed: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(seed, tags))
}
