//! Stable sub-seed derivation.
//!
//! Every stochastic stage draws from its own stream, keyed by the master seed, a stage
//! label and an entity index. The derivation is a fixed function of its inputs so any
//! stage can be replayed in isolation and parallel scheduling cannot change results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn label_hash(label: &str) -> u64 {
    label
        .bytes()
        .fold(FNV_OFFSET, |h, b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

/// Derives a sub-seed from `(master, stage, index)`.
pub fn derive(master: u64, stage: &str, index: u64) -> u64 {
    let h = splitmix64(master ^ splitmix64(label_hash(stage)));
    splitmix64(h ^ splitmix64(index.wrapping_add(0x6a09_e667_f3bc_c909)))
}

/// A ChaCha stream for `(master, stage, index)`.
pub fn stream(master: u64, stage: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(master, stage, index))
}
