//! Counter-based seed derivation.
//!
//! Every random stream is addressed by `(seed, domain, index)`, so output
//! never depends on thread scheduling or on the order streams are consumed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub(crate) const PROFILE: u64 = 1;
pub(crate) const IDIOSYNCRATIC: u64 = 2;
pub(crate) const EDGE: u64 = 3;
pub(crate) const SELECTION: u64 = 4;
pub(crate) const COMMON_FACTOR: u64 = 5;
pub(crate) const GROUPS: u64 = 6;
pub(crate) const BOOTSTRAP: u64 = 7;
pub(crate) const TRIAL: u64 = 8;

pub(crate) fn stream(seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ domain.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(index);
    rng
}

/// Derives a child seed, e.g. one per Monte Carlo trial.
pub(crate) fn child_seed(seed: u64, domain: u64, index: u64) -> u64 {
    use rand::RngCore;
    stream(seed, domain, index).next_u64()
}
