//! Ed25519 signing over a raw scalar.
//!
//! Standard Ed25519 derives the signing scalar and nonce prefix from a
//! SHA-512 of a seed. Box signing keys are scalars obtained by blinding, so
//! that hashing step is skipped: the nonce is `r = KDF(S ∥ message)` reduced
//! mod ℓ, and the signature is `(R = B·r, s = r + SHA-512(R ∥ A ∥ m)·S)`.
//! Verification is unmodified (strict) Ed25519.

use curve25519_dalek::scalar::Scalar;
use ed25519_dalek::{Signature, VerifyingKey};
use sha2::{Digest, Sha512};

use crate::crypto::kdf::kdf_array;
use crate::crypto::{GroupElement, GroupScalar};

pub fn sign_with_scalar(signing: &GroupScalar, public: &GroupElement, message: &[u8]) -> [u8; 64] {
    let mut ikm = Vec::with_capacity(32 + message.len());
    ikm.extend_from_slice(&signing.to_bytes());
    ikm.extend_from_slice(message);
    let nonce_wide: [u8; 64] = kdf_array(&ikm, b"bacap/sign-nonce");
    let r = GroupScalar::from_wide_bytes(&nonce_wide);
    let big_r = GroupElement::mul_base(&r).to_bytes();

    let mut h = Sha512::new();
    h.update(big_r);
    h.update(public.to_bytes());
    h.update(message);
    let k = Scalar::from_hash(h);
    let s = r.inner() + k * signing.inner();

    let mut sig = [0u8; 64];
    sig[..32].copy_from_slice(&big_r);
    sig[32..].copy_from_slice(s.as_bytes());
    sig
}

pub fn verify_signature(public: &GroupElement, message: &[u8], signature: &[u8; 64]) -> bool {
    let Ok(vk) = VerifyingKey::from_bytes(&public.to_bytes()) else {
        return false;
    };
    let sig = Signature::from_bytes(signature);
    vk.verify_strict(message, &sig).is_ok()
}
