//! Seed derivation for reproducible, independently streamed generators.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 step; used to decorrelate derived seeds.
pub fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from a root seed and a stream label.
///
/// Distinct `(label, index)` pairs yield independent streams, so work items
/// (walks, repeats, stages) can be generated in any order or in parallel and
/// still reproduce the sequential result.
pub fn derive_seed(root: u64, label: &str, index: u64) -> u64 {
    let mut h = splitmix64(root);
    for b in label.bytes() {
        h = splitmix64(h ^ u64::from(b));
    }
    splitmix64(h ^ index)
}

/// The crate's seeded generator.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
