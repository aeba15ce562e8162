//! Seeded random streams.
//!
//! Every Monte Carlo replica draws from its own ChaCha8 stream keyed by
//! `(seed, replica)`, so results do not depend on how replicas are scheduled
//! across threads. Normal variates come from `rand_distr::StandardNormal`
//! (ziggurat), which is deterministic for a fixed crate version.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type ReplicaRng = ChaCha8Rng;

/// Independent stream for replica `replica` of a run seeded with `seed`.
pub fn replica_rng(seed: u64, replica: u64) -> ReplicaRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replica);
    rng
}

/// Derives a sub-seed for a named sub-experiment so that campaigns sharing a
/// top-level seed still use unrelated streams.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    // FNV-1a over the label, mixed with the seed
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

pub fn standard_normal<R: rand::Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

pub fn fill_standard_normal<R: rand::Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    for v in out {
        *v = StandardNormal.sample(rng);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = (0..4).map(|_| replica_rng(7, 3).random()).collect();
        let mut r = replica_rng(7, 3);
        let b: Vec<u64> = (0..4).map(|_| r.random()).collect();
        assert_eq!(a[0], b[0]);
        let mut other = replica_rng(7, 4);
        assert_ne!(b[0], other.random::<u64>());
        assert_ne!(derive_seed(1, "tail"), derive_seed(1, "stability"));
    }
}
