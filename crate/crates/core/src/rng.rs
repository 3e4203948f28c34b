//! Deterministic random streams.
//!
//! Every Monte Carlo trial draws from its own generator, seeded from a hash of
//! the master seed, a label naming the experiment, and the trial index. Trial
//! results therefore do not depend on how trials are scheduled across workers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Generator type used throughout the crate.
pub type StreamRng = ChaCha8Rng;

/// Derive the generator for trial `index` of the experiment named `label`.
pub fn stream(master_seed: u64, label: &str, index: u64) -> StreamRng {
    let mut hasher = Sha256::new();
    hasher.update(master_seed.to_le_bytes());
    hasher.update((label.len() as u64).to_le_bytes());
    hasher.update(label.as_bytes());
    hasher.update(index.to_le_bytes());
    let digest = hasher.finalize();
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(seed)
}
