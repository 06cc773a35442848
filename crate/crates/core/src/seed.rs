//! Deterministic seed derivation.
//!
//! Every stochastic consumer draws from a stream keyed by
//! `(master, task, trial)`, so results do not depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for trial `trial` of task `task` under `master`.
pub fn derive_seed(master: u64, task: u64, trial: u64) -> u64 {
    splitmix(splitmix(splitmix(master) ^ task) ^ trial.rotate_left(17))
}

pub fn rng_for(master: u64, task: u64, trial: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, task, trial))
}
