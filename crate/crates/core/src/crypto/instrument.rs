//! Public-key operation counters for NIKE and KEM suites.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rand::RngCore;

use super::kem::{Encapsulation, Kem, KemKeypair, KemSuite};
use super::nike::{Nike, NikeKeypair, NikeSuite};
use super::CryptoError;

/// Shared counter of public-key operations (exchange, blind, encapsulate,
/// decapsulate). Key generation is not counted.
#[derive(Debug, Default, Clone)]
pub struct OpCounter(Arc<AtomicU64>);

impl OpCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self) -> u64 {
        self.0.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.0.store(0, Ordering::Relaxed)
    }

    fn bump(&self) {
        self.0.fetch_add(1, Ordering::Relaxed);
    }
}

/// Wraps a suite and counts its public-key operations.
#[derive(Debug, Clone)]
pub struct Counted<T> {
    inner: T,
    counter: OpCounter,
}

impl<T> Counted<T> {
    pub fn new(inner: T) -> Self {
        Counted {
            inner,
            counter: OpCounter::new(),
        }
    }

    pub fn counter(&self) -> &OpCounter {
        &self.counter
    }
}

impl<T: Nike> Nike for Counted<T> {
    fn suite(&self) -> NikeSuite {
        self.inner.suite()
    }

    fn generate_keypair(&self, rng: &mut dyn RngCore) -> NikeKeypair {
        self.inner.generate_keypair(rng)
    }

    fn public_from_private(&self, private: &[u8]) -> Result<Vec<u8>, CryptoError> {
        self.counter.bump();
        self.inner.public_from_private(private)
    }

    fn shared_secret(&self, private: &[u8], public: &[u8]) -> Result<Vec<u8>, CryptoError> {
        self.counter.bump();
        self.inner.shared_secret(private, public)
    }

    fn blind_public(&self, public: &[u8], factor: &[u8; 64]) -> Result<Vec<u8>, CryptoError> {
        self.counter.bump();
        self.inner.blind_public(public, factor)
    }

    fn blind_private(&self, private: &[u8], factor: &[u8; 64]) -> Result<Vec<u8>, CryptoError> {
        self.counter.bump();
        self.inner.blind_private(private, factor)
    }
}

impl<T: Kem> Kem for Counted<T> {
    fn suite(&self) -> KemSuite {
        self.inner.suite()
    }

    fn generate_keypair(&self, rng: &mut dyn RngCore) -> KemKeypair {
        self.inner.generate_keypair(rng)
    }

    fn encapsulate(&self, public: &[u8], rng: &mut dyn RngCore) -> Result<Encapsulation, CryptoError> {
        self.counter.bump();
        self.inner.encapsulate(public, rng)
    }

    fn decapsulate(&self, keypair: &KemKeypair, ciphertext: &[u8]) -> Result<[u8; 32], CryptoError> {
        self.counter.bump();
        self.inner.decapsulate(keypair, ciphertext)
    }
}
