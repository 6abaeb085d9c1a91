//! Key encapsulation mechanisms and the generic KEM combiner.

use std::sync::Arc;

use rand::RngCore;

use super::kdf::{hash256, kdf_bytes};
use super::nike::{Nike, X25519Nike};
use super::CryptoError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KemSuite {
    pub name: String,
    pub public_key_size: usize,
    pub private_key_size: usize,
    pub ciphertext_size: usize,
    pub shared_secret_size: usize,
}

#[derive(Clone, PartialEq, Eq)]
pub struct KemKeypair {
    pub private: Vec<u8>,
    pub public: Vec<u8>,
}

impl std::fmt::Debug for KemKeypair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KemKeypair").field("public", &self.public).finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Encapsulation {
    pub ciphertext: Vec<u8>,
    pub shared_secret: [u8; 32],
}

pub trait Kem: Send + Sync {
    fn suite(&self) -> KemSuite;
    fn generate_keypair(&self, rng: &mut dyn RngCore) -> KemKeypair;
    fn encapsulate(&self, public: &[u8], rng: &mut dyn RngCore) -> Result<Encapsulation, CryptoError>;
    fn decapsulate(&self, keypair: &KemKeypair, ciphertext: &[u8]) -> Result<[u8; 32], CryptoError>;
}

/// Hashed Diffie-Hellman KEM over X25519: the ciphertext is an ephemeral
/// public key and the shared secret is `H(DH ∥ ct ∥ pk)`.
#[derive(Debug, Default, Clone, Copy)]
pub struct X25519Kem;

impl X25519Kem {
    fn combine(dh: &[u8], ct: &[u8], pk: &[u8]) -> [u8; 32] {
        hash256(b"x25519-kem", &[dh, ct, pk])
    }
}

impl Kem for X25519Kem {
    fn suite(&self) -> KemSuite {
        KemSuite {
            name: "X25519".into(),
            public_key_size: 32,
            private_key_size: 32,
            ciphertext_size: 32,
            shared_secret_size: 32,
        }
    }

    fn generate_keypair(&self, rng: &mut dyn RngCore) -> KemKeypair {
        let kp = X25519Nike.generate_keypair(rng);
        KemKeypair {
            private: kp.private,
            public: kp.public,
        }
    }

    fn encapsulate(&self, public: &[u8], rng: &mut dyn RngCore) -> Result<Encapsulation, CryptoError> {
        if public.len() != 32 {
            return Err(CryptoError::InvalidLength);
        }
        let eph = X25519Nike.generate_keypair(rng);
        let dh = X25519Nike.shared_secret(&eph.private, public)?;
        Ok(Encapsulation {
            shared_secret: Self::combine(&dh, &eph.public, public),
            ciphertext: eph.public,
        })
    }

    fn decapsulate(&self, keypair: &KemKeypair, ciphertext: &[u8]) -> Result<[u8; 32], CryptoError> {
        if ciphertext.len() != 32 {
            return Err(CryptoError::InvalidLength);
        }
        let dh = X25519Nike.shared_secret(&keypair.private, ciphertext)?;
        Ok(Self::combine(&dh, ciphertext, &keypair.public))
    }
}

/// Placeholder with the public-key, ciphertext and secret sizes of
/// ML-KEM-768 (1184 / 1088 / 32 bytes). It is an X25519 hash-DH KEM whose
/// keys and ciphertexts are extended with KDF-derived filler; decapsulation
/// checks the filler and returns an unrelated pseudorandom secret when it
/// was modified. It exists to exercise large-ciphertext packet geometries
/// and provides no post-quantum security.
#[derive(Debug, Default, Clone, Copy)]
pub struct StubMlKem768;

impl StubMlKem768 {
    pub const PUBLIC_KEY_SIZE: usize = 1184;
    pub const CIPHERTEXT_SIZE: usize = 1088;

    fn filler(seed: &[u8], label: &[u8], len: usize) -> Vec<u8> {
        kdf_bytes(seed, label, len)
    }
}

impl Kem for StubMlKem768 {
    fn suite(&self) -> KemSuite {
        KemSuite {
            name: "MLKEM768-stub".into(),
            public_key_size: Self::PUBLIC_KEY_SIZE,
            private_key_size: 32,
            ciphertext_size: Self::CIPHERTEXT_SIZE,
            shared_secret_size: 32,
        }
    }

    fn generate_keypair(&self, rng: &mut dyn RngCore) -> KemKeypair {
        let kp = X25519Kem.generate_keypair(rng);
        let mut public = kp.public.clone();
        public.extend(Self::filler(&kp.public, b"stub-mlkem-pk", Self::PUBLIC_KEY_SIZE - 32));
        KemKeypair {
            private: kp.private,
            public,
        }
    }

    fn encapsulate(&self, public: &[u8], rng: &mut dyn RngCore) -> Result<Encapsulation, CryptoError> {
        if public.len() != Self::PUBLIC_KEY_SIZE {
            return Err(CryptoError::InvalidLength);
        }
        let inner = X25519Kem.encapsulate(&public[..32], rng)?;
        let mut ciphertext = inner.ciphertext.clone();
        ciphertext.extend(Self::filler(&inner.ciphertext, b"stub-mlkem-ct", Self::CIPHERTEXT_SIZE - 32));
        Ok(Encapsulation {
            shared_secret: hash256(b"stub-mlkem-ss", &[&inner.shared_secret, &ciphertext]),
            ciphertext,
        })
    }

    fn decapsulate(&self, keypair: &KemKeypair, ciphertext: &[u8]) -> Result<[u8; 32], CryptoError> {
        if ciphertext.len() != Self::CIPHERTEXT_SIZE || keypair.public.len() != Self::PUBLIC_KEY_SIZE {
            return Err(CryptoError::InvalidLength);
        }
        let expected = Self::filler(&ciphertext[..32], b"stub-mlkem-ct", Self::CIPHERTEXT_SIZE - 32);
        if expected[..] != ciphertext[32..] {
            // implicit rejection
            return Ok(hash256(b"stub-mlkem-reject", &[&keypair.private, ciphertext]));
        }
        let inner_kp = KemKeypair {
            private: keypair.private.clone(),
            public: keypair.public[..32].to_vec(),
        };
        let ss = X25519Kem.decapsulate(&inner_kp, &ciphertext[..32])?;
        Ok(hash256(b"stub-mlkem-ss", &[&ss, ciphertext]))
    }
}

/// Combination of any number of KEMs. Keys and ciphertexts are the
/// concatenation of the members'; the shared secret is a KDF over every
/// member secret followed by every member ciphertext, so it stays secret as
/// long as one member is secure.
#[derive(Clone)]
pub struct CombinedKem {
    members: Vec<Arc<dyn Kem>>,
}

impl std::fmt::Debug for CombinedKem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_tuple("CombinedKem").field(&self.suite().name).finish()
    }
}

/// Builds the combiner over `members`. An empty list is rejected.
pub fn kem_combine(members: Vec<Arc<dyn Kem>>) -> Result<CombinedKem, CryptoError> {
    if members.is_empty() {
        return Err(CryptoError::EmptyCombiner);
    }
    Ok(CombinedKem { members })
}

fn split<'a>(mut bytes: &'a [u8], sizes: &[usize]) -> Result<Vec<&'a [u8]>, CryptoError> {
    if bytes.len() != sizes.iter().sum::<usize>() {
        return Err(CryptoError::InvalidLength);
    }
    Ok(sizes
        .iter()
        .map(|&n| {
            let (head, tail) = bytes.split_at(n);
            bytes = tail;
            head
        })
        .collect())
}

impl CombinedKem {
    pub fn members(&self) -> &[Arc<dyn Kem>] {
        &self.members
    }

    fn derive(secrets: &[[u8; 32]], ciphertexts: &[&[u8]]) -> [u8; 32] {
        let mut ikm = Vec::new();
        for s in secrets {
            ikm.extend_from_slice(s);
        }
        for c in ciphertexts {
            ikm.extend_from_slice(&(c.len() as u32).to_be_bytes());
            ikm.extend_from_slice(c);
        }
        let out = kdf_bytes(&ikm, b"kem-combiner", 32);
        let mut ss = [0u8; 32];
        ss.copy_from_slice(&out);
        ss
    }
}

impl Kem for CombinedKem {
    fn suite(&self) -> KemSuite {
        let suites: Vec<KemSuite> = self.members.iter().map(|m| m.suite()).collect();
        KemSuite {
            name: suites.iter().map(|s| s.name.as_str()).collect::<Vec<_>>().join("-"),
            public_key_size: suites.iter().map(|s| s.public_key_size).sum(),
            private_key_size: suites.iter().map(|s| s.private_key_size + s.public_key_size).sum(),
            ciphertext_size: suites.iter().map(|s| s.ciphertext_size).sum(),
            shared_secret_size: 32,
        }
    }

    fn generate_keypair(&self, rng: &mut dyn RngCore) -> KemKeypair {
        let mut private = Vec::new();
        let mut public = Vec::new();
        for m in &self.members {
            let kp = m.generate_keypair(rng);
            // member public keys are carried in the private key so that
            // members can be reconstructed for decapsulation
            private.extend(kp.private);
            private.extend(&kp.public);
            public.extend(kp.public);
        }
        KemKeypair { private, public }
    }

    fn encapsulate(&self, public: &[u8], rng: &mut dyn RngCore) -> Result<Encapsulation, CryptoError> {
        let sizes: Vec<usize> = self.members.iter().map(|m| m.suite().public_key_size).collect();
        let pks = split(public, &sizes)?;
        let mut cts = Vec::with_capacity(self.members.len());
        let mut secrets = Vec::with_capacity(self.members.len());
        for (m, pk) in self.members.iter().zip(pks) {
            let e = m.encapsulate(pk, rng)?;
            cts.push(e.ciphertext);
            secrets.push(e.shared_secret);
        }
        let refs: Vec<&[u8]> = cts.iter().map(|c| c.as_slice()).collect();
        Ok(Encapsulation {
            shared_secret: Self::derive(&secrets, &refs),
            ciphertext: cts.concat(),
        })
    }

    fn decapsulate(&self, keypair: &KemKeypair, ciphertext: &[u8]) -> Result<[u8; 32], CryptoError> {
        let suites: Vec<KemSuite> = self.members.iter().map(|m| m.suite()).collect();
        let ct_sizes: Vec<usize> = suites.iter().map(|s| s.ciphertext_size).collect();
        let sk_sizes: Vec<usize> = suites
            .iter()
            .flat_map(|s| [s.private_key_size, s.public_key_size])
            .collect();
        let cts = split(ciphertext, &ct_sizes)?;
        let sks = split(&keypair.private, &sk_sizes)?;
        let mut secrets = Vec::with_capacity(self.members.len());
        for (i, m) in self.members.iter().enumerate() {
            let member_kp = KemKeypair {
                private: sks[2 * i].to_vec(),
                public: sks[2 * i + 1].to_vec(),
            };
            secrets.push(m.decapsulate(&member_kp, cts[i])?);
        }
        Ok(Self::derive(&secrets, &cts))
    }
}
