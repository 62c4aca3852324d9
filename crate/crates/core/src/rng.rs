//! Reproducible per-patient random streams.
//!
//! Every patient draws from its own ChaCha20 stream. The 256-bit key is
//! `seed` (little endian, bytes 0..8) followed by `replicate` (little endian,
//! bytes 8..16) and sixteen zero bytes; the 64-bit stream id is the patient
//! index and the block counter starts at zero. Uniforms on `(0, 1)` are
//! `((u >> 11) + 0.5) * 2^-53` for successive 64-bit outputs `u`. Any ChaCha20
//! implementation with a 64-bit counter and 64-bit nonce reproduces a cohort
//! from `(seed, replicate, index)` alone, independent of execution order.

use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};

pub struct PatientStream {
    inner: ChaCha20Rng,
}

impl PatientStream {
    pub fn new(seed: u64, replicate: u64, patient: u64) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        key[8..16].copy_from_slice(&replicate.to_le_bytes());
        let mut inner = ChaCha20Rng::from_seed(key);
        inner.set_stream(patient);
        PatientStream { inner }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform draw strictly inside `(0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
        ((self.next_u64() >> 11) as f64 + 0.5) * SCALE
    }
}
