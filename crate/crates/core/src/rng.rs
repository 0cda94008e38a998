//! Seeded randomness.
//!
//! Every random draw in the crate comes from ChaCha8 seeded by a single
//! 64-bit value, split into independent streams so that, for example, weight
//! initialization and minibatch shuffling do not perturb each other. ChaCha8
//! output is specified bit-for-bit, so runs reproduce across platforms.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Named streams derived from one experiment seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Data = 1,
    InitApprox = 2,
    InitPred = 3,
    InitShared = 4,
    Shuffle = 5,
    Misc = 6,
}

pub fn seeded(seed: u64, stream: Stream) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}
