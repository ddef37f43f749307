//! Named, seed-derived random substreams.
//!
//! Every consumer of randomness draws from its own stream derived from the
//! master seed and a name, so adding draws in one place never shifts the
//! values seen elsewhere.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn fnv1a(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stream `name` of master seed `seed`.
pub fn substream(seed: u64, name: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(seed ^ fnv1a(name)))
}

/// Sub-stream `index` of stream `name`, e.g. one per feature.
pub fn indexed_substream(seed: u64, name: &str, index: u64) -> ChaCha8Rng {
    let mut rng = substream(seed, name);
    rng.set_stream(index);
    rng
}
