//! Counter-based seed derivation with named streams.
//!
//! Every random component draws from its own ChaCha stream keyed by
//! `sha256(master seed, stream name)`, so enabling or disabling one pipeline
//! never shifts another pipeline's random numbers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Rng = ChaCha8Rng;

fn digest(seed: u64, name: &str) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update((name.len() as u64).to_le_bytes());
    h.update(name.as_bytes());
    h.finalize().into()
}

/// Independent RNG stream for `(seed, name)`.
pub fn stream(seed: u64, name: &str) -> Rng {
    ChaCha8Rng::from_seed(digest(seed, name))
}

/// Child seed for `(seed, name)`, for handing to a component that derives
/// its own streams.
pub fn derive(seed: u64, name: &str) -> u64 {
    let d = digest(seed, name);
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

/// `n` distinct seeds derived from `master`. Entry `i` depends only on
/// `(master, i)`, so shorter plans are prefixes of longer ones.
pub fn seed_plan(master: u64, n: usize) -> Vec<u64> {
    let mut out: Vec<u64> = Vec::with_capacity(n);
    for i in 0..n {
        let mut attempt = 0u64;
        loop {
            let s = derive(master, &format!("seed-plan/{i}/{attempt}"));
            if !out.contains(&s) {
                out.push(s);
                break;
            }
            attempt += 1;
        }
    }
    out
}
