//! Seeded randomness.
//!
//! Every random decision in the crate (splits, weight init, batching,
//! augmentation, query sampling) draws from PCG-64 (XSL RR 128/64, the
//! `rand_pcg::Pcg64` generator) seeded through `SeedableRng::seed_from_u64`.
//! Independent streams for one run are derived by mixing a purpose tag into
//! the base seed, so adding a consumer never shifts another consumer's draws.

use rand::SeedableRng;
use rand_pcg::Pcg64;

pub type Rng = Pcg64;

pub fn seeded(seed: u64) -> Rng {
    Pcg64::seed_from_u64(seed)
}

/// Stream for `(seed, tag)`.
pub fn stream(seed: u64, tag: &str) -> Rng {
    // FNV-1a over the tag, folded into the seed.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    Pcg64::seed_from_u64(seed ^ h.rotate_left(17))
}
