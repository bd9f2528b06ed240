//! Deterministic RNG substreams.
//!
//! All randomness in the crate flows from a single 64-bit master seed.
//! Independent substreams are derived by mixing the seed with integer
//! tags (unit index, replication index, draw index, ...), so any loop
//! over tagged work items can be reordered or parallelized without
//! changing its output.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer; decorrelates consecutive tag values.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Mix a seed with one tag.
pub fn mix(seed: u64, tag: u64) -> u64 {
    splitmix64(seed ^ splitmix64(tag))
}

/// Derive a seed from a master seed and a sequence of tags.
pub fn derive_seed(master: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(master, |acc, &t| mix(acc, t))
}

/// An independent RNG stream keyed by (master seed, tags).
pub fn substream(master: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, tags))
}
