use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::hash::{meets_difficulty, sha3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolModel {
    /// Share difficulty in leading zero bits.
    pub share_difficulty: u32,
    /// Hashes per second.
    pub hash_rate: f64,
    /// Probability a computed digest is wrong.
    pub hash_error_rate: f64,
}

/// Erroneous digests never verify at the pool, so exactly the `⟨ε⟩`
/// fraction of shares is lost.
pub fn expected_share_rate(pool: &PoolModel, duration_s: f64) -> f64 {
    pool.hash_rate * duration_s * (-f64::from(pool.share_difficulty)).exp2() * (1.0 - pool.hash_error_rate)
}

/// Accepted shares out of `attempts` submissions. Each attempt hashes a
/// counter; with probability `⟨ε⟩` the miner's hardware gets the digest
/// wrong and the pool's recomputation rejects it.
pub fn simulate_shares(pool: &PoolModel, attempts: u64, seed: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tag = seed.to_be_bytes();
    (0..attempts)
        .filter(|i| {
            let wrong = rng.random::<f64>() < pool.hash_error_rate;
            !wrong && meets_difficulty(&sha3(&[&tag, &i.to_be_bytes()]), pool.share_difficulty)
        })
        .count() as u64
}
