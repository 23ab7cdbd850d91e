//! Per-item random streams keyed by (global seed, item id, stage tag).
//!
//! Each stream is a ChaCha8 generator whose 256-bit key is the SHA-256 of the
//! three key parts, so draws for one item never depend on how many other items
//! were processed before it or on which thread runs it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

fn key_digest(seed: u64, source_id: &str, stage: &str) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update((stage.len() as u64).to_le_bytes());
    h.update(stage.as_bytes());
    h.update(source_id.as_bytes());
    h.finalize().into()
}

pub fn keyed_rng(seed: u64, source_id: &str, stage: &str) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(key_digest(seed, source_id, stage))
}

/// Short printable form of the stream key, recorded in provenance.
pub fn rng_key(seed: u64, source_id: &str, stage: &str) -> String {
    let d = key_digest(seed, source_id, stage);
    d[..8].iter().map(|b| format!("{b:02x}")).collect()
}
