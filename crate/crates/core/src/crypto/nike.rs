//! Non-interactive key exchange.

use curve25519_dalek::montgomery::MontgomeryPoint;
use curve25519_dalek::scalar::Scalar;
use rand::RngCore;

use super::group::GroupScalar;
use super::CryptoError;

/// Static description of a NIKE: its name and encoded sizes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NikeSuite {
    pub name: String,
    pub public_key_size: usize,
    pub private_key_size: usize,
    pub shared_secret_size: usize,
}

#[derive(Clone, PartialEq, Eq)]
pub struct NikeKeypair {
    pub private: Vec<u8>,
    pub public: Vec<u8>,
}

impl std::fmt::Debug for NikeKeypair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NikeKeypair").field("public", &self.public).finish_non_exhaustive()
    }
}

/// A NIKE with the blinding operation Sphinx needs: blinding a public key
/// and the matching private key by the same 512-bit factor must commute
/// with the key exchange.
pub trait Nike: Send + Sync {
    fn suite(&self) -> NikeSuite;
    fn generate_keypair(&self, rng: &mut dyn RngCore) -> NikeKeypair;
    fn public_from_private(&self, private: &[u8]) -> Result<Vec<u8>, CryptoError>;
    fn shared_secret(&self, private: &[u8], public: &[u8]) -> Result<Vec<u8>, CryptoError>;
    fn blind_public(&self, public: &[u8], factor: &[u8; 64]) -> Result<Vec<u8>, CryptoError>;
    fn blind_private(&self, private: &[u8], factor: &[u8; 64]) -> Result<Vec<u8>, CryptoError>;
}

/// X25519 over unclamped scalars modulo ℓ so that blinding is plain scalar
/// multiplication.
#[derive(Debug, Default, Clone, Copy)]
pub struct X25519Nike;

fn scalar_from(private: &[u8]) -> Result<Scalar, CryptoError> {
    let arr: [u8; 32] = private.try_into().map_err(|_| CryptoError::InvalidLength)?;
    Option::<Scalar>::from(Scalar::from_canonical_bytes(arr)).ok_or(CryptoError::NonCanonicalScalar)
}

fn point_from(public: &[u8]) -> Result<MontgomeryPoint, CryptoError> {
    let arr: [u8; 32] = public.try_into().map_err(|_| CryptoError::InvalidLength)?;
    Ok(MontgomeryPoint(arr))
}

impl Nike for X25519Nike {
    fn suite(&self) -> NikeSuite {
        NikeSuite {
            name: "X25519".into(),
            public_key_size: 32,
            private_key_size: 32,
            shared_secret_size: 32,
        }
    }

    fn generate_keypair(&self, rng: &mut dyn RngCore) -> NikeKeypair {
        let s = GroupScalar::random_nonzero(rng);
        let public = MontgomeryPoint::mul_base(s.inner()).to_bytes().to_vec();
        NikeKeypair {
            private: s.to_bytes().to_vec(),
            public,
        }
    }

    fn public_from_private(&self, private: &[u8]) -> Result<Vec<u8>, CryptoError> {
        let s = scalar_from(private)?;
        Ok(MontgomeryPoint::mul_base(&s).to_bytes().to_vec())
    }

    fn shared_secret(&self, private: &[u8], public: &[u8]) -> Result<Vec<u8>, CryptoError> {
        let s = scalar_from(private)?;
        let p = point_from(public)?;
        let out = (p * s).to_bytes();
        if out == [0u8; 32] {
            return Err(CryptoError::InvalidPublicKey);
        }
        Ok(out.to_vec())
    }

    fn blind_public(&self, public: &[u8], factor: &[u8; 64]) -> Result<Vec<u8>, CryptoError> {
        let p = point_from(public)?;
        let b = blinding_scalar(factor)?;
        let out = (p * b).to_bytes();
        if out == [0u8; 32] {
            return Err(CryptoError::InvalidPublicKey);
        }
        Ok(out.to_vec())
    }

    fn blind_private(&self, private: &[u8], factor: &[u8; 64]) -> Result<Vec<u8>, CryptoError> {
        let s = scalar_from(private)?;
        let b = blinding_scalar(factor)?;
        Ok((s * b).to_bytes().to_vec())
    }
}

fn blinding_scalar(factor: &[u8; 64]) -> Result<Scalar, CryptoError> {
    let b = Scalar::from_bytes_mod_order_wide(factor);
    if b == Scalar::ZERO {
        return Err(CryptoError::NotInvertible);
    }
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn symmetric_over_random_keypairs() {
        let nike = X25519Nike;
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        for _ in 0..100 {
            let a = nike.generate_keypair(&mut rng);
            let b = nike.generate_keypair(&mut rng);
            let ab = nike.shared_secret(&a.private, &b.public).unwrap();
            let ba = nike.shared_secret(&b.private, &a.public).unwrap();
            assert_eq!(ab, ba);
            assert_eq!(ab, nike.shared_secret(&a.private, &b.public).unwrap());
        }
    }

    #[test]
    fn blinding_commutes_with_exchange() {
        let nike = X25519Nike;
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let a = nike.generate_keypair(&mut rng);
        let b = nike.generate_keypair(&mut rng);
        let mut f = [0u8; 64];
        rng.fill_bytes(&mut f);
        let a_blind_pub = nike.blind_public(&a.public, &f).unwrap();
        let a_blind_priv = nike.blind_private(&a.private, &f).unwrap();
        assert_eq!(nike.public_from_private(&a_blind_priv).unwrap(), a_blind_pub);
        assert_eq!(
            nike.shared_secret(&b.private, &a_blind_pub).unwrap(),
            nike.shared_secret(&a_blind_priv, &b.public).unwrap()
        );
    }

    #[test]
    fn small_order_public_rejected() {
        let nike = X25519Nike;
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let a = nike.generate_keypair(&mut rng);
        assert_eq!(nike.shared_secret(&a.private, &[0u8; 32]), Err(CryptoError::InvalidPublicKey));
        assert_eq!(nike.shared_secret(&a.private, &[0u8; 31]), Err(CryptoError::InvalidLength));
    }
}
