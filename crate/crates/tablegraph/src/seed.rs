//! Deterministic seed derivation.
//!
//! One master seed fans out into independent streams (per sample, per
//! training step) through a splitmix64 mix, so replaying any single stream
//! never requires replaying the others.

/// Derives the seed for stream `index` of `master`. `index` 0 is a valid
/// stream, distinct from `master` itself.
pub fn derive(master: u64, index: u64) -> u64 {
    splitmix64(master.wrapping_add((index.wrapping_add(1)).wrapping_mul(0x9E37_79B9_7F4A_7C15)))
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
