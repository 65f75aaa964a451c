//! Deterministic RNG stream derivation.
//!
//! Every source of randomness in the system is a [`ChaCha8Rng`] derived from
//! the master seed plus a stream label and indices. Streams are re-derivable
//! from `(seed, label, indices)` alone, so a resumed run draws exactly the
//! same values as an uninterrupted one without serializing generator state.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 finalizer; mixes a label/index into a seed word.
fn mix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

fn label_hash(label: &str) -> u64 {
    // FNV-1a, stable across platforms.
    let mut h: u64 = 0xcbf29ce484222325;
    for b in label.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Derives an independent generator for `(seed, label, a, b)`.
pub fn stream(seed: u64, label: &str, a: u64, b: u64) -> ChaCha8Rng {
    let mut s = mix(seed ^ label_hash(label));
    s = mix(s ^ a.wrapping_mul(0xd1342543de82ef95));
    s = mix(s ^ b.wrapping_mul(0x2545f4914f6cdd1d));
    ChaCha8Rng::seed_from_u64(s)
}
