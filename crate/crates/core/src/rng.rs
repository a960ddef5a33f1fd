//! Deterministic seeded randomness.
//!
//! Every random decision in the engine flows from a single run seed through
//! named substreams, so each component (fleet draw, split balancing, weight
//! init, batch shuffling, path sampling) can be reproduced in isolation.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Mixes a 64-bit state into a well-distributed output (splitmix64 finalizer).
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Derives a child seed from a parent seed and a stream label.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let mut h = mix(seed ^ 0x853c49e6748fea9b);
    for &b in label.as_bytes() {
        h = mix(h ^ u64::from(b));
    }
    h
}

/// Derives a child seed keyed by label and index (window id, path id, ...).
pub fn derive_seed_indexed(seed: u64, label: &str, index: u64) -> u64 {
    mix(derive_seed(seed, label) ^ mix(index))
}

/// A named substream RNG.
pub fn substream(seed: u64, label: &str) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(derive_seed(seed, label))
}

/// A named substream RNG keyed by an extra index.
pub fn substream_indexed(seed: u64, label: &str, index: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(derive_seed_indexed(seed, label, index))
}

/// Uniform draw in the open interval (0, 1).
pub fn open_unit(rng: &mut impl rand::RngCore) -> f64 {
    // 53 random bits, offset by half an ulp so 0 and 1 are excluded
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0)
}
