//! Deterministic random-stream derivation.
//!
//! Every stochastic routine takes a master seed and derives independent
//! substreams per walk (or per pole, per probe, ...) by mixing the seed with
//! a stream index through SplitMix64. Re-running a batch with the same seed
//! reproduces every walk bit-exactly, and walk `i` never depends on how many
//! walks run around it.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 step; the standard 64-bit finalizer.
#[inline]
pub fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// RNG for substream `index` of master `seed`.
pub fn substream(seed: u64, index: u64) -> ChaCha8Rng {
    let mixed = splitmix64(splitmix64(seed) ^ index.wrapping_mul(0xA24BAED4963EE407));
    ChaCha8Rng::seed_from_u64(mixed)
}

/// Substream keyed by a point's coordinate bits, so identical poles get
/// identical streams regardless of their position in an argument list.
pub fn substream_for_point(seed: u64, label: u64, point: &[f64]) -> ChaCha8Rng {
    let mut h = splitmix64(seed) ^ label.wrapping_mul(0x9E3779B97F4A7C15);
    for &c in point {
        h = splitmix64(h ^ c.to_bits());
    }
    ChaCha8Rng::seed_from_u64(h)
}
