//! Deterministic seed fan-out.
//!
//! Every random stream in the crate derives from one root seed plus a label,
//! so components never share a generator and reruns are reproducible.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from a parent seed and a component label.
pub fn derive(seed: u64, label: &str) -> u64 {
    label
        .bytes()
        .fold(splitmix(seed), |acc, b| splitmix(acc ^ u64::from(b)))
}

/// Derives a child seed from a parent seed and an index (per-item streams).
pub fn derive_index(seed: u64, index: u64) -> u64 {
    splitmix(splitmix(seed) ^ index.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

pub fn stream(seed: u64, label: &str) -> Rng {
    Rng::seed_from_u64(derive(seed, label))
}

pub fn seeded(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}
