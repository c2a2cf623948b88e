//! Counter-based random streams.
//!
//! Every random draw in the crate is addressed by `(seed, stream, position)`
//! so results do not depend on iteration order or thread count. Streams are
//! ChaCha8 with the stream id selecting the nonce and the position selecting
//! the word offset.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Domain tags keep unrelated consumers of the same seed apart.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Bernoulli = 1,
    LshTree = 2,
    LshBackfill = 3,
    LabelPropagation = 4,
    RandomHk = 5,
    Instance = 6,
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a sub-seed from a seed and a sequence of counters.
pub fn derive(seed: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(mix64(seed), |acc, &p| mix64(acc ^ mix64(p)))
}

/// Positioned stream: `stream(seed, domain, a, b)` starting at word `pos`.
pub fn stream(seed: u64, domain: Domain, a: u64, b: u64, pos: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(derive(seed, &[domain as u64, a]));
    rng.set_stream(b);
    // two 32-bit words per u64 draw
    rng.set_word_pos(u128::from(pos) * 2);
    rng
}

/// Uniform in `[0, 1)` with 53 bits.
pub fn unit_f64(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}
