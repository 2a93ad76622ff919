//! Seeded random-number streams.
//!
//! Every source of randomness in the crate is derived from a single base seed
//! plus a stream label (`"corpus"`, `"shuffle"`, `"mask"`, `"init"`, ...), so
//! adding or reordering consumers never perturbs unrelated streams.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Derive a named sub-stream from a base seed. ChaCha output is platform
/// independent, so the same (seed, label) pair replays identically anywhere.
pub fn stream(seed: u64, label: &str) -> Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&fnv1a(label.as_bytes()).to_le_bytes());
    key[16..24].copy_from_slice(&seed.rotate_left(32).to_le_bytes());
    key[24..32].copy_from_slice(&fnv1a(label.as_bytes()).rotate_left(17).to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// Sub-stream further keyed by integers (step, slot, ...), for per-sample
/// randomness that stays stable under parallel batch assembly.
pub fn substream(seed: u64, label: &str, keys: &[u64]) -> Rng {
    stream(derive_seed(seed, label, keys), "sub")
}

/// Plain u64 seed derived from (seed, label, keys); for APIs that take a
/// seed rather than an rng.
pub fn derive_seed(seed: u64, label: &str, keys: &[u64]) -> u64 {
    let mut bytes = Vec::with_capacity(keys.len() * 8 + label.len());
    bytes.extend_from_slice(label.as_bytes());
    for k in keys {
        bytes.extend_from_slice(&k.to_le_bytes());
    }
    seed ^ fnv1a(&bytes)
}
