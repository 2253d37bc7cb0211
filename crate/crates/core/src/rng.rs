//! Seeded randomness shared by the split, dropout and sampling paths.
//!
//! Everything random in the toolkit is drawn from ChaCha8 seeded with a
//! caller-supplied `u64`. Bounded integers use rejection sampling on raw
//! 64-bit outputs so the sequence depends only on the ChaCha8 stream and not
//! on any particular `rand` distribution implementation.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Identifier recorded next to any seeded output.
pub const RNG_ALGORITHM: &str = "chacha8-u64seed";

pub type SeededRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform integer in `0..bound`. `bound` must be positive.
pub fn below(rng: &mut impl RngCore, bound: u64) -> u64 {
    assert!(bound > 0, "empty range");
    // Reject the low zone so every residue is equally likely.
    let zone = bound.wrapping_neg() % bound;
    loop {
        let x = rng.next_u64();
        if x >= zone {
            return x % bound;
        }
    }
}

/// Uniform real in `[0, 1)` with 53 bits of precision.
pub fn unit(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}
