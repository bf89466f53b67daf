//! Seed derivation for independent deterministic random substreams.

/// Fixed substream tags so unrelated consumers of the master seed never collide.
pub mod tags {
    pub const SPLIT: u64 = 1;
    pub const FOREST: u64 = 2;
    pub const SYNTH_TOKEN: u64 = 3;
}

/// Derives a child seed from a master seed and a tag via splitmix64.
///
/// Distinct `(master, tag)` pairs give statistically independent streams, so a
/// single configured seed can drive splits, bootstraps, and data generation
/// without any of them sharing state.
pub fn derive_seed(master: u64, tag: u64) -> u64 {
    splitmix64(master ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

/// splitmix64 finalizer; a well-mixed 64-bit permutation.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
