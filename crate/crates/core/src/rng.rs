//! Deterministic random-stream derivation.
//!
//! Every stochastic component draws from a `ChaCha8` stream derived from a
//! `(seed, batch, episode)` triple, so episodes can run in any order (or in
//! parallel) and still reproduce byte-identical results. Derivation is
//! counter-based: each of the four triple components (plus an internal lane
//! tag) is passed through the SplitMix64 finalizer into one 64-bit word of
//! the 256-bit ChaCha key, so distinct triples map to distinct keys.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Reserved episode tag: per-batch setup draws (`s0`, `s1`).
pub(crate) const SETUP_STREAM: u64 = u64::MAX;
/// Reserved episode tag: per-batch gating-noise draws.
pub(crate) const NOISE_STREAM: u64 = u64::MAX - 1;
/// Reserved batch tag: policy-evaluation episodes.
pub(crate) const EVAL_STREAM: u64 = u64::MAX - 2;

/// SplitMix64 finalizer; bijective on `u64`.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) fn derive_stream(seed: u64, batch: u64, episode: u64, lane: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&mix(seed).to_le_bytes());
    key[8..16].copy_from_slice(&mix(batch ^ 0x243F_6A88_85A3_08D3).to_le_bytes());
    key[16..24].copy_from_slice(&mix(episode ^ 0x1319_8A2E_0370_7344).to_le_bytes());
    key[24..32].copy_from_slice(&mix(lane ^ seed.rotate_left(32) ^ 0xA409_3822_299F_31D0).to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// Derives the reproducible random stream for `(seed, batch, episode)`.
///
/// Streams for distinct triples are statistically independent. Episode
/// indices at the top of the `u64` range are reserved for internal tags.
pub fn seed_stream(seed: u64, batch: u64, episode: u64) -> ChaCha8Rng {
    derive_stream(seed, batch, episode, 0)
}
