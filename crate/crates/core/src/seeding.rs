//! Named random substreams derived from the single global seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Derives a 64-bit seed from `(seed, label, key)`. Stable across platforms
/// and releases, so adding a speaker never perturbs another speaker's stream.
pub fn substream_seed(seed: u64, label: &str, key: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(label.as_bytes());
    hasher.update([0u8]);
    hasher.update(key.as_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

pub fn substream(seed: u64, label: &str, key: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(substream_seed(seed, label, key))
}

/// Generator for the `index`-th Monte Carlo repetition. Each repetition gets
/// its own ChaCha stream, so results do not depend on how work is scheduled.
pub fn repetition_rng(seed: u64, label: &str, index: u64) -> ChaCha8Rng {
    let mut rng = substream(seed, label, "");
    rng.set_stream(index);
    rng
}
