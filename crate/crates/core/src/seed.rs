//! Seeding and checksums shared by all randomized steps.
//!
//! Every chain owns a [`ChainRng`] seeded from a 64-bit value. Batch decoding
//! derives one stream per input as `seed ^ h(id)`, where `h` is the first eight
//! bytes (little endian) of SHA-256 of the id, so results do not depend on the
//! order inputs are processed in.

use std::fs::File;
use std::io::{self, Read};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type ChainRng = ChaCha8Rng;

/// Recorded in run metadata so a run can be replayed with the same generator.
pub const RNG_NAME: &str = "rand_chacha::ChaCha8Rng (seed_from_u64)";

pub fn rng(seed: u64) -> ChainRng {
    ChainRng::seed_from_u64(seed)
}

pub fn id_hash(id: &str) -> u64 {
    let digest = Sha256::digest(id.as_bytes());
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

pub fn derive_seed(seed: u64, id: &str) -> u64 {
    seed ^ id_hash(id)
}

pub fn to_hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    to_hex(&Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> io::Result<String> {
    let mut file = File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(to_hex(&hasher.finalize()))
}
