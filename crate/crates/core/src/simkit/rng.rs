//! Seed derivation.
//!
//! One root seed per scenario. Entities get independent streams keyed by a
//! hash of `(root, entity id)`, so adding an entity never perturbs the draws of
//! another. Monte Carlo replications use ChaCha stream selection keyed by the
//! replication index, which makes replication `i` reproducible on its own.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Stable 64-bit seed for `label` under `root`.
pub fn derive_seed(root: u64, label: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(root.to_le_bytes());
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    let mut word = [0u8; 8];
    word.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(word)
}

pub fn entity_stream(root: u64, entity: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(root, entity))
}

/// Generator for replication `index` under `root`.
pub fn replication_stream(root: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(root);
    rng.set_stream(index);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngStreams {
    root: u64,
}

impl RngStreams {
    pub fn new(root: u64) -> Self {
        Self { root }
    }

    pub fn root(&self) -> u64 {
        self.root
    }

    pub fn stream(&self, entity: &str) -> ChaCha8Rng {
        entity_stream(self.root, entity)
    }

    pub fn child(&self, label: &str) -> RngStreams {
        RngStreams::new(derive_seed(self.root, label))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn draws(mut rng: ChaCha8Rng) -> Vec<u64> {
        (0..4).map(|_| rng.random()).collect()
    }

    #[test]
    fn entity_streams_are_independent_of_each_other() {
        let streams = RngStreams::new(42);
        assert_eq!(draws(streams.stream("a")), draws(streams.stream("a")));
        assert_ne!(draws(streams.stream("a")), draws(streams.stream("b")));
    }

    #[test]
    fn derived_seed_is_pinned() {
        // first 8 bytes (LE) of sha256(42u64 LE || "twin"), computed with hashlib
        assert_eq!(derive_seed(42, "twin"), 4327848322249664091);
        assert_ne!(derive_seed(0, "x"), derive_seed(1, "x"));
    }

    #[test]
    fn replication_streams_differ_across_roots_and_indices() {
        assert_eq!(
            draws(replication_stream(1, 5)),
            draws(replication_stream(1, 5))
        );
        assert_ne!(
            draws(replication_stream(1, 5)),
            draws(replication_stream(1, 4))
        );
        // a plain xor derivation would alias root 1/index 0 with root 0/index 1
        assert_ne!(
            draws(replication_stream(1, 0)),
            draws(replication_stream(0, 1))
        );
    }
}
