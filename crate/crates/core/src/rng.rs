//! Reproducible random streams.
//!
//! Every random draw in the crate comes from ChaCha8, a counter-based
//! generator: the 256-bit key is expanded from the user seed
//! (`SeedableRng::seed_from_u64`, PCG32 expansion) and the 64-bit stream id
//! is `(index << 8) | purpose`. A (seed, index, purpose) triple therefore
//! names one fixed stream, whichever thread consumes it and in whatever
//! order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// What a stream is used for; keeps draws for different jobs independent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Purpose {
    Data = 1,
    Split = 2,
    Truth = 3,
    CrossFit = 4,
    Bootstrap = 5,
    Membership = 6,
}

pub fn stream(seed: u64, index: u64, purpose: Purpose) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((index << 8) | purpose as u64);
    rng
}
