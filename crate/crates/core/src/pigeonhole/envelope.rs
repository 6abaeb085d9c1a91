//! Courier and replica envelopes.
//!
//! Envelope wire layout (big-endian integers):
//!
//! ```text
//! epoch (8) ∥ x25519 ephemeral public key (32) ∥ hybrid stub slot (128)
//! ∥ n (1) ∥ n × [ replica id (2) ∥ wrapped DEK (48) ]
//! ∥ len (4) ∥ enveloped message (len)
//! ```
//!
//! Each wrapped DEK is the 256-bit envelope key sealed under
//! `KDF(DH(ephemeral, replica epoch key) ∥ ephemeral ∥ replica key)`. The
//! enveloped message is a [`ReplicaCommand`] sealed under the DEK. A
//! courier can read the replica ids and nothing else.

use rand::RngCore;

use crate::bacap::BacapBox;
use crate::crypto::kdf::{hash256, kdf_array};
use crate::crypto::{aead_open, aead_seal, GroupScalar, Nike, NikeKeypair, X25519Nike};

use super::{PigeonholeError, ReplicaId};

pub const EPHEMERAL_SIZE: usize = 32;
/// Placeholder for the post-quantum half of the hybrid ephemeral key.
pub const HYBRID_STUB_SIZE: usize = 128;
pub const WRAPPED_DEK_SIZE: usize = 32 + 16;
const ZERO_NONCE: [u8; 12] = [0; 12];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WrappedDek {
    pub replica: ReplicaId,
    pub ciphertext: [u8; WRAPPED_DEK_SIZE],
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Envelope {
    pub epoch: u64,
    pub ephemeral_public: [u8; EPHEMERAL_SIZE],
    pub hybrid_stub: [u8; HYBRID_STUB_SIZE],
    pub keys: Vec<WrappedDek>,
    pub message: Vec<u8>,
}

/// Sender-side secrets needed to decrypt replica replies.
#[derive(Clone)]
pub struct EnvelopeSecrets {
    ephemeral_private: Vec<u8>,
    ephemeral_public: [u8; 32],
}

impl std::fmt::Debug for EnvelopeSecrets {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("EnvelopeSecrets(..)")
    }
}

fn derive(ss: &[u8], eph: &[u8], replica_pub: &[u8], label: &[u8]) -> [u8; 32] {
    let mut ikm = Vec::with_capacity(96);
    ikm.extend_from_slice(ss);
    ikm.extend_from_slice(eph);
    ikm.extend_from_slice(replica_pub);
    kdf_array(&ikm, label)
}

impl EnvelopeSecrets {
    /// Key the replica uses to encrypt its reply to this envelope.
    pub fn reply_key(&self, replica_public: &[u8]) -> Result<[u8; 32], PigeonholeError> {
        let ss = X25519Nike.shared_secret(&self.ephemeral_private, replica_public)?;
        Ok(derive(&ss, &self.ephemeral_public, replica_public, b"pigeonhole/reply"))
    }
}

impl Envelope {
    pub fn replica_ids(&self) -> Vec<ReplicaId> {
        self.keys.iter().map(|k| k.replica).collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(&self.epoch.to_be_bytes());
        out.extend_from_slice(&self.ephemeral_public);
        out.extend_from_slice(&self.hybrid_stub);
        out.push(self.keys.len() as u8);
        for k in &self.keys {
            out.extend_from_slice(&k.replica.0.to_be_bytes());
            out.extend_from_slice(&k.ciphertext);
        }
        out.extend_from_slice(&(self.message.len() as u32).to_be_bytes());
        out.extend_from_slice(&self.message);
        out
    }

    pub fn encoded_len(&self) -> usize {
        8 + EPHEMERAL_SIZE + HYBRID_STUB_SIZE + 1 + self.keys.len() * (2 + WRAPPED_DEK_SIZE) + 4 + self.message.len()
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self, PigeonholeError> {
        let mut r = Reader(b);
        let epoch = u64::from_be_bytes(r.take(8)?.try_into().expect("8"));
        let ephemeral_public: [u8; 32] = r.take(32)?.try_into().expect("32");
        let hybrid_stub: [u8; HYBRID_STUB_SIZE] = r.take(HYBRID_STUB_SIZE)?.try_into().expect("len");
        let n = r.take(1)?[0] as usize;
        let mut keys = Vec::with_capacity(n);
        for _ in 0..n {
            let id = u16::from_be_bytes(r.take(2)?.try_into().expect("2"));
            keys.push(WrappedDek {
                replica: ReplicaId(id),
                ciphertext: r.take(WRAPPED_DEK_SIZE)?.try_into().expect("len"),
            });
        }
        let len = u32::from_be_bytes(r.take(4)?.try_into().expect("4")) as usize;
        let message = r.take(len)?.to_vec();
        if !r.0.is_empty() {
            return Err(PigeonholeError::Malformed("trailing envelope bytes"));
        }
        Ok(Envelope {
            epoch,
            ephemeral_public,
            hybrid_stub,
            keys,
            message,
        })
    }

    /// Courier deduplication key.
    pub fn digest(&self) -> [u8; 32] {
        hash256(b"pigeonhole/envelope", &[&self.to_bytes()])
    }
}

struct Reader<'a>(&'a [u8]);

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], PigeonholeError> {
        if self.0.len() < n {
            return Err(PigeonholeError::Malformed("truncated"));
        }
        let (a, b) = self.0.split_at(n);
        self.0 = b;
        Ok(a)
    }
}

/// Encrypts `command` so that each listed replica can open it.
pub fn seal_envelope(
    epoch: u64,
    recipients: &[(ReplicaId, &[u8])],
    command: &ReplicaCommand,
    rng: &mut dyn RngCore,
) -> Result<(Envelope, EnvelopeSecrets), PigeonholeError> {
    let nike = X25519Nike;
    let eph = nike.generate_keypair(rng);
    let ephemeral_public: [u8; 32] = eph.public.as_slice().try_into().expect("x25519 public");
    let mut hybrid_stub = [0u8; HYBRID_STUB_SIZE];
    rng.fill_bytes(&mut hybrid_stub);
    let mut dek = [0u8; 32];
    rng.fill_bytes(&mut dek);

    let mut keys = Vec::with_capacity(recipients.len());
    for (id, pk) in recipients {
        let ss = nike.shared_secret(&eph.private, pk)?;
        let kek = derive(&ss, &ephemeral_public, pk, b"pigeonhole/kek");
        let ct = aead_seal(&kek, &ZERO_NONCE, &id.0.to_be_bytes(), &dek);
        keys.push(WrappedDek {
            replica: *id,
            ciphertext: ct.try_into().expect("wrapped DEK size"),
        });
    }
    let message = aead_seal(&dek, &ZERO_NONCE, &ephemeral_public, &command.to_bytes());
    Ok((
        Envelope {
            epoch,
            ephemeral_public,
            hybrid_stub,
            keys,
            message,
        },
        EnvelopeSecrets {
            ephemeral_private: eph.private,
            ephemeral_public,
        },
    ))
}

/// Replica side: unwraps its DEK, decrypts the command and returns it with
/// the reply key.
pub fn open_envelope(
    env: &Envelope,
    replica: ReplicaId,
    key: &NikeKeypair,
) -> Result<(ReplicaCommand, [u8; 32]), PigeonholeError> {
    let wrapped = env
        .keys
        .iter()
        .find(|k| k.replica == replica)
        .ok_or(PigeonholeError::NotAddressed)?;
    let ss = X25519Nike.shared_secret(&key.private, &env.ephemeral_public)?;
    let kek = derive(&ss, &env.ephemeral_public, &key.public, b"pigeonhole/kek");
    let dek: [u8; 32] = aead_open(&kek, &ZERO_NONCE, &replica.0.to_be_bytes(), &wrapped.ciphertext)
        .map_err(|_| PigeonholeError::Decryption)?
        .try_into()
        .map_err(|_| PigeonholeError::Decryption)?;
    let pt = aead_open(&dek, &ZERO_NONCE, &env.ephemeral_public, &env.message).map_err(|_| PigeonholeError::Decryption)?;
    let reply_key = derive(&ss, &env.ephemeral_public, &key.public, b"pigeonhole/reply");
    Ok((ReplicaCommand::from_bytes(&pt)?, reply_key))
}

/// What a replica sees inside an envelope.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReplicaCommand {
    Write(BacapBox),
    Read { box_id: [u8; 32] },
}

impl ReplicaCommand {
    pub fn to_bytes(&self) -> Vec<u8> {
        match self {
            ReplicaCommand::Write(b) => {
                let mut v = vec![1u8];
                v.extend(b.to_bytes());
                v
            }
            ReplicaCommand::Read { box_id } => {
                let mut v = vec![2u8];
                v.extend_from_slice(box_id);
                v
            }
        }
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self, PigeonholeError> {
        match b.split_first() {
            Some((1, rest)) => Ok(ReplicaCommand::Write(BacapBox::from_bytes(rest)?)),
            Some((2, rest)) if rest.len() == 32 => Ok(ReplicaCommand::Read {
                box_id: rest.try_into().expect("32"),
            }),
            _ => Err(PigeonholeError::Malformed("replica command")),
        }
    }
}

/// Positive or negative read result, padded to `max_box_len` before
/// encryption so both kinds have one wire length.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReadResult {
    Found(BacapBox),
    NotFound,
}

pub fn reply_wire_len(max_box_len: usize) -> usize {
    12 + 1 + 4 + max_box_len + 16
}

pub fn seal_reply(
    reply_key: &[u8; 32],
    result: &ReadResult,
    max_box_len: usize,
    rng: &mut dyn RngCore,
) -> Result<Vec<u8>, PigeonholeError> {
    let mut pt = Vec::with_capacity(1 + 4 + max_box_len);
    match result {
        ReadResult::Found(b) => {
            let enc = b.to_bytes();
            if enc.len() > max_box_len {
                return Err(PigeonholeError::Malformed("box exceeds reply capacity"));
            }
            pt.push(1);
            pt.extend_from_slice(&(enc.len() as u32).to_be_bytes());
            pt.extend(enc);
        }
        ReadResult::NotFound => {
            pt.push(0);
            pt.extend_from_slice(&0u32.to_be_bytes());
        }
    }
    pt.resize(1 + 4 + max_box_len, 0);
    let mut nonce = [0u8; 12];
    rng.fill_bytes(&mut nonce);
    let mut out = nonce.to_vec();
    out.extend(aead_seal(reply_key, &nonce, b"pigeonhole/reply", &pt));
    Ok(out)
}

pub fn open_reply(reply_key: &[u8; 32], wire: &[u8]) -> Result<ReadResult, PigeonholeError> {
    if wire.len() < 12 + 16 + 5 {
        return Err(PigeonholeError::Malformed("reply too short"));
    }
    let nonce: [u8; 12] = wire[..12].try_into().expect("12");
    let pt = aead_open(reply_key, &nonce, b"pigeonhole/reply", &wire[12..]).map_err(|_| PigeonholeError::Decryption)?;
    let len = u32::from_be_bytes(pt[1..5].try_into().expect("4")) as usize;
    match pt[0] {
        0 => Ok(ReadResult::NotFound),
        1 if 5 + len <= pt.len() => Ok(ReadResult::Found(BacapBox::from_bytes(&pt[5..5 + len])?)),
        _ => Err(PigeonholeError::Malformed("reply status")),
    }
}

/// Per-epoch replica keys derived from a long-term seed.
#[derive(Clone)]
pub struct EpochKeySchedule {
    seed: [u8; 32],
}

impl EpochKeySchedule {
    pub fn new(seed: [u8; 32]) -> Self {
        EpochKeySchedule { seed }
    }

    pub fn keypair(&self, epoch: u64) -> NikeKeypair {
        let mut ikm = self.seed.to_vec();
        ikm.extend_from_slice(&epoch.to_be_bytes());
        let wide: [u8; 64] = kdf_array(&ikm, b"pigeonhole/epoch-key");
        let mut s = GroupScalar::from_wide_bytes(&wide);
        if s.is_zero() {
            s = GroupScalar::ONE;
        }
        let private = s.to_bytes().to_vec();
        let public = X25519Nike.public_from_private(&private).expect("canonical scalar");
        NikeKeypair { private, public }
    }
}
