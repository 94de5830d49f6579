//! Deterministic seed derivation for nested random streams.

/// SplitMix64 finalizer; maps any 64-bit state to a well-mixed output.
fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from a root seed and two stream coordinates.
///
/// The same `(root, a, b)` triple always yields the same seed, and distinct
/// coordinates yield independent-looking streams. Used for per-individual
/// evaluation seeds, per-generation breeding RNGs, and per-sample
/// augmentation draws.
pub fn mix_seed(root: u64, a: u64, b: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(root) ^ a) ^ b)
}
