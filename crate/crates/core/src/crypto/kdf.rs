//! Key derivation.
//!
//! Every derivation in the crate goes through HKDF-SHA256 (RFC 5869):
//! extract with the fixed salt [`KDF_SALT`] over the input keying material,
//! then expand with a caller-supplied label. Multiple 256-bit outputs are
//! produced by expanding `label ∥ be32(j)` for output index `j`, so there is
//! no upper limit on the number of outputs.

use hkdf::Hkdf;
use sha2::{Digest, Sha256};

/// Extract salt shared by all derivations.
pub const KDF_SALT: &[u8] = b"echomix/kdf/v1";

/// An opaque 256-bit chaining state. Only forward derivation is exposed.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct KdfState(pub [u8; 32]);

impl std::fmt::Debug for KdfState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("KdfState(..)")
    }
}

impl KdfState {
    pub fn to_bytes(&self) -> [u8; 32] {
        self.0
    }
}

/// Derives `n_outputs` independent 256-bit values from `state` under `info`.
pub fn kdf_expand(state: &KdfState, info: &[u8], n_outputs: usize) -> Vec<[u8; 32]> {
    let hk = Hkdf::<Sha256>::new(Some(KDF_SALT), &state.0);
    let mut label = Vec::with_capacity(info.len() + 4);
    (0..n_outputs)
        .map(|j| {
            label.clear();
            label.extend_from_slice(info);
            label.extend_from_slice(&(j as u32).to_be_bytes());
            let mut out = [0u8; 32];
            hk.expand(&label, &mut out).expect("32 bytes is a valid HKDF length");
            out
        })
        .collect()
}

/// HKDF over arbitrary keying material, producing `len` bytes.
pub fn kdf_bytes(ikm: &[u8], info: &[u8], len: usize) -> Vec<u8> {
    let hk = Hkdf::<Sha256>::new(Some(KDF_SALT), ikm);
    let mut out = vec![0u8; len];
    let mut off = 0;
    let mut block = 0u32;
    let mut label = Vec::with_capacity(info.len() + 4);
    // HKDF-Expand is capped at 255 hash blocks per label; chunk by block index.
    while off < len {
        let chunk = (len - off).min(255 * 32);
        label.clear();
        label.extend_from_slice(info);
        label.extend_from_slice(&block.to_be_bytes());
        hk.expand(&label, &mut out[off..off + chunk])
            .expect("chunk within HKDF bound");
        off += chunk;
        block += 1;
    }
    out
}

/// Fixed-size variant of [`kdf_bytes`].
pub fn kdf_array<const N: usize>(ikm: &[u8], info: &[u8]) -> [u8; N] {
    let v = kdf_bytes(ikm, info, N);
    let mut out = [0u8; N];
    out.copy_from_slice(&v);
    out
}

/// Domain-separated SHA-256 over a sequence of parts. Each part is length
/// prefixed so that concatenation boundaries are unambiguous.
pub fn hash256(domain: &[u8], parts: &[&[u8]]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update((domain.len() as u32).to_be_bytes());
    h.update(domain);
    for p in parts {
        h.update((p.len() as u64).to_be_bytes());
        h.update(p);
    }
    h.finalize().into()
}
