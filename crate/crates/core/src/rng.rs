//! Seeded pseudorandom streams and the elementary variates drawn from them.
//!
//! Every stream is a ChaCha12 generator keyed by a 64-bit seed. Component and
//! trial streams are derived from one master seed by hashing a label together
//! with the seed and an index, so adding a component never shifts the draws of
//! another.

use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

pub type DetRng = rand_chacha::ChaCha12Rng;

pub fn rng_from_seed(seed: u64) -> DetRng {
    DetRng::seed_from_u64(seed)
}

/// First 8 bytes (little-endian) of SHA-256(label ‖ 0x00 ‖ master_le ‖ index_le).
pub fn derive_seed(master: u64, label: &str, index: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(label.as_bytes());
    h.update([0u8]);
    h.update(master.to_le_bytes());
    h.update(index.to_le_bytes());
    let digest = h.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

pub fn derive_rng(master: u64, label: &str, index: u64) -> DetRng {
    rng_from_seed(derive_seed(master, label, index))
}

/// Uniform on (0, 1]; never returns 0 so `ln` is always finite.
#[inline]
pub fn uniform_open_closed<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    1.0 - rng.random::<f64>()
}

#[inline]
pub fn standard_exponential<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    -uniform_open_closed(rng).ln()
}

/// Laplace(0, scale) as a random sign times an exponential magnitude.
#[inline]
pub fn laplace<R: Rng + ?Sized>(rng: &mut R, scale: f64) -> f64 {
    let magnitude = scale * standard_exponential(rng);
    if rng.random::<bool>() {
        magnitude
    } else {
        -magnitude
    }
}

#[inline]
pub fn gaussian<R: Rng + ?Sized>(rng: &mut R, sigma: f64) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    sigma * z
}
