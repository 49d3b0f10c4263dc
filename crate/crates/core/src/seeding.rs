//! Deterministic sub-seed derivation.
//!
//! All randomness in the crate flows from explicit u64 seeds. When one seed
//! has to fan out into independent streams (per epoch, per identity, per
//! camera, ...), the sub-seed is derived by folding the context labels
//! through a splitmix64-style mixer. The derivation is pure, so generation
//! order never matters.

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Fold `parts` into `base`, producing an independent stream seed.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    let mut state = splitmix(base);
    for &p in parts {
        state = splitmix(state ^ p.wrapping_mul(0xA24B_AED4_963E_E407));
    }
    state
}
