//! Seed derivation for reproducible Monte Carlo.
//!
//! Every random quantity is drawn from a `ChaCha8Rng` whose seed is derived
//! from a master seed and an index path (replication, group, iteration, ...).
//! The derivation folds each index into the state with SplitMix64:
//!
//! ```text
//! h = master
//! for x in path: h = splitmix64(h ^ splitmix64(x))
//! ```
//!
//! Results therefore depend only on `(master, path)` and never on how work
//! is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

#[inline]
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(master, |h, &x| splitmix64(h ^ splitmix64(x)))
}

pub fn rng_from_seed(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream `stream` of the generator keyed by `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
