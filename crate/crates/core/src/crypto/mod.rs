//! Primitive interfaces shared by every protocol layer.

pub mod aead;
pub mod catalog;
pub mod group;
pub mod instrument;
pub mod kdf;
pub mod kem;
pub mod nike;
pub mod symmetric;

pub use aead::{aead_open, aead_seal};
pub use group::{scalar_mult, GroupElement, GroupScalar};
pub use instrument::{Counted, OpCounter};
pub use kdf::{kdf_expand, KdfState};
pub use kem::{kem_combine, CombinedKem, Kem, KemKeypair, KemSuite, StubMlKem768, X25519Kem};
pub use nike::{Nike, NikeKeypair, NikeSuite, X25519Nike};

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum CryptoError {
    #[error("invalid group element encoding")]
    InvalidPoint,
    #[error("scalar encoding is not reduced modulo the group order")]
    NonCanonicalScalar,
    #[error("scalar is not invertible")]
    NotInvertible,
    #[error("invalid public key")]
    InvalidPublicKey,
    #[error("input has the wrong length")]
    InvalidLength,
    #[error("authentication failed")]
    Authentication,
    #[error("KEM combiner needs at least one member")]
    EmptyCombiner,
    #[error("block shorter than the wide-block cipher minimum")]
    BlockTooShort,
}
