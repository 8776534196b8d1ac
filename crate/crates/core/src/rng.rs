//! Seeded random streams.
//!
//! Every consumer of randomness draws from its own ChaCha8 stream derived
//! from the experiment seed, so adding a new noise target never shifts the
//! draws of an existing one.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use alloc::vec::Vec;

/// Name recorded in report config echoes.
pub const PRNG_ALGORITHM: &str = "ChaCha8Rng (rand_chacha 0.9, seed_from_u64, one stream per target)";

/// Stream identifiers. Values are part of the reproducibility contract.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Timing = 1,
    Data = 2,
    PreconditionerDiagonal = 3,
    PreconditionerRotation = 4,
    PowerIteration = 5,
    Experiment = 6,
}

pub fn stream(seed: u64, which: Stream) -> ChaCha8Rng {
    child(seed, which as u64)
}

/// Stream with an arbitrary id, for Monte-Carlo loops over instances.
pub fn child(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Uniform draw on `[0, 1)`.
pub fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    rng.random::<f64>()
}

pub fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| gaussian(rng)).collect()
}
