//! Keyed random streams. Every stream is a pure function of its key, so
//! results never depend on call order or thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Derives a child seed from a parent seed and a tag, e.g. `"stage2/dog"`.
pub fn derive_seed(seed: u64, tag: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(b"seed\0");
    hasher.update(seed.to_le_bytes());
    hasher.update(tag.as_bytes());
    let digest: [u8; 32] = hasher.finalize().into();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

/// RNG for one slot of one image, keyed by `(seed, image id, slot)`.
pub fn stream(seed: u64, image_id: &str, slot: u64) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(b"stream\0");
    hasher.update(seed.to_le_bytes());
    hasher.update((image_id.len() as u64).to_le_bytes());
    hasher.update(image_id.as_bytes());
    hasher.update(slot.to_le_bytes());
    ChaCha8Rng::from_seed(hasher.finalize().into())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_keyed() {
        let a: u64 = stream(1, "img", 0).random();
        assert_eq!(a, stream(1, "img", 0).random::<u64>());
        assert_ne!(a, stream(2, "img", 0).random::<u64>());
        assert_ne!(a, stream(1, "img", 1).random::<u64>());
        assert_ne!(a, stream(1, "img2", 0).random::<u64>());
        assert_ne!(derive_seed(1, "stage1"), derive_seed(1, "stage2/dog"));
    }
}
