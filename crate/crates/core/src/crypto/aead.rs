//! AES-256-GCM-SIV (RFC 8452).

use aes_gcm_siv::aead::{Aead, KeyInit, Payload};
use aes_gcm_siv::{Aes256GcmSiv, Nonce};

use super::CryptoError;

pub const AEAD_KEY_SIZE: usize = 32;
pub const AEAD_NONCE_SIZE: usize = 12;
pub const AEAD_TAG_SIZE: usize = 16;

pub fn aead_seal(
    key: &[u8; AEAD_KEY_SIZE],
    nonce: &[u8; AEAD_NONCE_SIZE],
    associated_data: &[u8],
    plaintext: &[u8],
) -> Vec<u8> {
    let cipher = Aes256GcmSiv::new(key.into());
    cipher
        .encrypt(
            Nonce::from_slice(nonce),
            Payload {
                msg: plaintext,
                aad: associated_data,
            },
        )
        .expect("plaintext below the RFC 8452 length bound")
}

pub fn aead_open(
    key: &[u8; AEAD_KEY_SIZE],
    nonce: &[u8; AEAD_NONCE_SIZE],
    associated_data: &[u8],
    ciphertext: &[u8],
) -> Result<Vec<u8>, CryptoError> {
    let cipher = Aes256GcmSiv::new(key.into());
    cipher
        .decrypt(
            Nonce::from_slice(nonce),
            Payload {
                msg: ciphertext,
                aad: associated_data,
            },
        )
        .map_err(|_| CryptoError::Authentication)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_and_bitflip_sweep() {
        let key = [3u8; 32];
        let nonce = [4u8; 12];
        let msg = b"pigeonhole box payload";
        let ct = aead_seal(&key, &nonce, b"ad", msg);
        assert_eq!(aead_open(&key, &nonce, b"ad", &ct).unwrap(), msg);
        for bit in 0..ct.len() * 8 {
            let mut bad = ct.clone();
            bad[bit / 8] ^= 1 << (bit % 8);
            assert_eq!(aead_open(&key, &nonce, b"ad", &bad), Err(CryptoError::Authentication));
        }
        assert!(aead_open(&key, &nonce, b"other", &ct).is_err());
    }

    #[test]
    fn empty_plaintext() {
        let key = [1u8; 32];
        let nonce = [0u8; 12];
        let ct = aead_seal(&key, &nonce, &[], &[]);
        assert_eq!(ct.len(), AEAD_TAG_SIZE);
        assert!(aead_open(&key, &nonce, &[], &ct).unwrap().is_empty());
    }
}
