//! Deterministic random streams.
//!
//! Every subsystem draws from its own ChaCha stream keyed by `(seed, tag)`, so
//! adding a new consumer never shifts the numbers another one sees.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags used by the pipeline.
pub mod tags {
    pub const SYNTH: &str = "synth";
    pub const ROUTER: &str = "router";
    pub const PREDICTOR: &str = "predictor";
    pub const LOSSES: &str = "losses";
    pub const SCHEDULE: &str = "schedule";
}

/// FNV-1a over the tag bytes; stable across platforms and releases.
fn tag_hash(tag: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Independent RNG for `tag` under the global `seed`.
pub fn stream(seed: u64, tag: &str) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tag_hash(tag));
    rng
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_independent_and_repeatable() {
        let a: Vec<u64> = stream(7, "a").random_iter().take(4).collect();
        let a2: Vec<u64> = stream(7, "a").random_iter().take(4).collect();
        let b: Vec<u64> = stream(7, "b").random_iter().take(4).collect();
        assert_eq!(a, a2);
        assert_ne!(a, b);
    }
}
