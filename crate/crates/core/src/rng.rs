//! Explicitly passed, seeded random streams.
//!
//! Nothing in the crate draws from global or thread-local randomness; every
//! stochastic routine takes a seed or a [`Rng`] and derives child streams
//! with [`derive_seed`].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn fnv1a(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

/// Child seed for the stream `(label, index)` of `parent`.
pub fn derive_seed(parent: u64, label: &str, index: u64) -> u64 {
    splitmix64(parent ^ splitmix64(fnv1a(label) ^ splitmix64(index)))
}

pub fn child(parent: u64, label: &str, index: u64) -> Rng {
    seeded(derive_seed(parent, label, index))
}

pub fn normal(rng: &mut Rng) -> f64 {
    StandardNormal.sample(rng)
}

pub fn normals(rng: &mut Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| normal(rng)).collect()
}
