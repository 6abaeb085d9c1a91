//! Scalars modulo the Ed25519 group order and points of the prime-order
//! subgroup.

use curve25519_dalek::constants::ED25519_BASEPOINT_POINT;
use curve25519_dalek::edwards::{CompressedEdwardsY, EdwardsPoint};
use curve25519_dalek::scalar::Scalar;
use curve25519_dalek::traits::Identity;
use rand::RngCore;

use super::CryptoError;

/// An integer modulo ℓ, the order of the Ed25519 prime-order subgroup.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct GroupScalar(Scalar);

impl GroupScalar {
    pub const ZERO: GroupScalar = GroupScalar(Scalar::ZERO);
    pub const ONE: GroupScalar = GroupScalar(Scalar::ONE);

    pub fn from_u64(v: u64) -> Self {
        GroupScalar(Scalar::from(v))
    }

    /// Accepts only canonical (already reduced) little-endian encodings.
    pub fn from_canonical_bytes(bytes: [u8; 32]) -> Result<Self, CryptoError> {
        Option::<Scalar>::from(Scalar::from_canonical_bytes(bytes))
            .map(GroupScalar)
            .ok_or(CryptoError::NonCanonicalScalar)
    }

    /// Reduces a 512-bit little-endian integer modulo ℓ. The bias of the
    /// reduction is below 2^-250.
    pub fn from_wide_bytes(bytes: &[u8; 64]) -> Self {
        GroupScalar(Scalar::from_bytes_mod_order_wide(bytes))
    }

    /// Uniform nonzero scalar.
    pub fn random_nonzero<R: RngCore + ?Sized>(rng: &mut R) -> Self {
        loop {
            let mut wide = [0u8; 64];
            rng.fill_bytes(&mut wide);
            let s = Self::from_wide_bytes(&wide);
            if !s.is_zero() {
                return s;
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.0 == Scalar::ZERO
    }

    pub fn mul(&self, other: &GroupScalar) -> GroupScalar {
        GroupScalar(self.0 * other.0)
    }

    pub fn invert(&self) -> Result<GroupScalar, CryptoError> {
        if self.is_zero() {
            return Err(CryptoError::NotInvertible);
        }
        Ok(GroupScalar(self.0.invert()))
    }

    pub fn to_bytes(&self) -> [u8; 32] {
        self.0.to_bytes()
    }

    pub(crate) fn inner(&self) -> &Scalar {
        &self.0
    }

    #[cfg(test)]
    pub(crate) fn from_inner(s: Scalar) -> Self {
        GroupScalar(s)
    }
}

impl std::fmt::Debug for GroupScalar {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("GroupScalar(..)")
    }
}

/// A point of the Ed25519 group. Values obtained through [`GroupElement::from_bytes`]
/// are guaranteed to lie in the prime-order subgroup and to not be the identity.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct GroupElement(EdwardsPoint);

impl GroupElement {
    pub fn basepoint() -> Self {
        GroupElement(ED25519_BASEPOINT_POINT)
    }

    pub fn identity() -> Self {
        GroupElement(EdwardsPoint::identity())
    }

    /// Base point times `s`.
    pub fn mul_base(s: &GroupScalar) -> Self {
        GroupElement(EdwardsPoint::mul_base(s.inner()))
    }

    /// Decodes a 32-byte compressed point, rejecting non-canonical encodings,
    /// the identity, small-order and mixed-order points.
    pub fn from_bytes(bytes: &[u8; 32]) -> Result<Self, CryptoError> {
        let compressed = CompressedEdwardsY(*bytes);
        let point = compressed.decompress().ok_or(CryptoError::InvalidPoint)?;
        if point.compress().to_bytes() != *bytes {
            return Err(CryptoError::InvalidPoint);
        }
        if point.is_small_order() || !point.is_torsion_free() {
            return Err(CryptoError::InvalidPoint);
        }
        Ok(GroupElement(point))
    }

    pub fn from_slice(bytes: &[u8]) -> Result<Self, CryptoError> {
        let arr: [u8; 32] = bytes.try_into().map_err(|_| CryptoError::InvalidPoint)?;
        Self::from_bytes(&arr)
    }

    pub fn to_bytes(&self) -> [u8; 32] {
        self.0.compress().to_bytes()
    }

    pub fn is_identity(&self) -> bool {
        self.0 == EdwardsPoint::identity()
    }

}

impl std::fmt::Debug for GroupElement {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let b = self.to_bytes();
        write!(f, "GroupElement({:02x}{:02x}{:02x}{:02x}..)", b[0], b[1], b[2], b[3])
    }
}

/// `e · s`. A zero scalar yields the identity, which callers treat as an
/// error sentinel.
pub fn scalar_mult(e: &GroupElement, s: &GroupScalar) -> GroupElement {
    GroupElement(e.0 * s.0)
}
