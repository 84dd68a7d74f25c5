use sha2::{Digest, Sha256};

/// Child seed for a named stage: the first eight bytes of
/// `sha256(root || stage)`.
pub fn derive_seed(root: u64, stage: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(root.to_le_bytes());
    h.update(stage.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}
