//! Named deterministic random streams.
//!
//! Every consumer of randomness draws from its own stream keyed by
//! (seed, job id, purpose). Adding or removing a job therefore never
//! perturbs the draws of any other job.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// FNV-1a, used instead of `std` hashing because the latter is randomly
/// keyed per process.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

fn mix(mut z: u64) -> u64 {
    // splitmix64 finalizer
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Deterministic stream for `(seed, job_id, purpose)`.
pub fn stream(seed: u64, job_id: u64, purpose: &str) -> ChaCha8Rng {
    let key = mix(seed ^ mix(job_id.wrapping_add(0x9e3779b97f4a7c15)) ^ fnv1a(purpose.as_bytes()));
    ChaCha8Rng::seed_from_u64(key)
}
