//! Seed plumbing. Every stochastic stage takes an explicit 64-bit seed and
//! builds a ChaCha8 stream from it, so results are identical across machines.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type PdsrRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> PdsrRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from a parent seed and an ordered list of labels.
///
/// Distinct label paths give statistically independent streams, and adding a
/// new label path never changes the seeds of existing ones.
pub fn derive_seed(parent: u64, labels: &[u64]) -> u64 {
    let mut acc = mix64(parent ^ 0x9e37_79b9_7f4a_7c15);
    for &label in labels {
        acc = mix64(acc.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_add(mix64(label)));
    }
    acc
}

/// Label namespaces for [`derive_seed`].
pub mod stream {
    pub const LSH: u64 = 1;
    pub const SPLIT: u64 = 2;
    pub const REPETITION: u64 = 3;
    pub const ORACLE: u64 = 4;
    pub const SYNTHETIC: u64 = 5;
}
