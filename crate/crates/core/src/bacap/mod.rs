//! Blinding-and-capability scheme.
//!
//! A writer holds a root scalar `S_R`, its public key `P_R = B·S_R`, a
//! starting index `i_0 < 2^63` and a 256-bit KDF state `H_{i_0}`. Anyone
//! holding `(P_R, H_i, i)` can walk the chain
//!
//! ```text
//! H_i, i      --KDF-->  H_{i+1}, E_i, K_i
//! E_i, ctx    --KDF-->  E_i^ctx
//! K_i, ctx    --KDF-->  K_i^ctx        (reduced mod ℓ, resampled if zero)
//! M_i^ctx      =  P_R · K_i^ctx        (the box ID)
//! ```
//!
//! and decrypt box `i`. Only the writer can compute the signing scalar
//! `S_i^ctx = S_R × K_i^ctx mod ℓ`, whose public key is exactly `M_i^ctx`, so
//! box signatures verify under the box ID with standard Ed25519.
//!
//! # Wire encodings
//!
//! All integers are big-endian.
//!
//! ```text
//! ReadCap   = P_R (32) ∥ H_i (32) ∥ i (8)                          72 bytes
//! WriteCap  = S_R (32, little-endian scalar) ∥ H_i (32) ∥ i (8)   72 bytes
//! BacapBox  = M (32) ∥ len(c) (4) ∥ c (len) ∥ signature (64)
//! ```

mod sign;

use rand::RngCore;

use crate::crypto::kdf::hash256;
use crate::crypto::{aead_open, aead_seal, kdf_expand, CryptoError, GroupElement, GroupScalar, KdfState};

pub use sign::{sign_with_scalar, verify_signature};

/// Initial indices are drawn below this bound so that at least 2^63 boxes
/// follow the starting point.
pub const INITIAL_INDEX_BOUND: u64 = 1 << 63;
pub const SIGNATURE_SIZE: usize = 64;
pub const READ_CAP_SIZE: usize = 72;
pub const WRITE_CAP_SIZE: usize = 72;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BacapError {
    #[error("index counter exhausted")]
    IndexOverflow,
    #[error("cannot move a capability backwards from {current} to {requested}")]
    IndexInPast { current: u64, requested: u64 },
    #[error("box signature does not verify")]
    Verification,
    #[error("box decryption failed")]
    Decryption,
    #[error("box holds a tombstone")]
    Tombstone,
    #[error("box keys were not derived from this write capability")]
    KeyMismatch,
    #[error("malformed encoding: {0}")]
    Malformed(&'static str),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
}

/// Hashed public blinding context, e.g. of a weekly shared random value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Context(pub [u8; 32]);

impl Context {
    pub fn from_public_value(value: &[u8]) -> Self {
        Context(hash256(b"bacap/context", &[value]))
    }
}

/// Root secrets of a box sequence.
#[derive(Clone, PartialEq, Eq)]
pub struct WriteCap {
    root_private: GroupScalar,
    root_public: GroupElement,
    index: u64,
    state: KdfState,
}

impl std::fmt::Debug for WriteCap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("WriteCap")
            .field("root_public", &self.root_public)
            .field("index", &self.index)
            .finish_non_exhaustive()
    }
}

/// The shareable reader tuple `(P_R, H_i, i)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReadCap {
    root_public: GroupElement,
    state: KdfState,
    index: u64,
}

/// Everything derived for one box under one context.
#[derive(Clone, PartialEq, Eq)]
pub struct BoxKeys {
    pub index: u64,
    pub box_id: GroupElement,
    pub encryption_key: [u8; 32],
    pub blinding: GroupScalar,
    pub next_state: KdfState,
}

impl std::fmt::Debug for BoxKeys {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BoxKeys")
            .field("index", &self.index)
            .field("box_id", &self.box_id)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BacapBox {
    pub box_id: GroupElement,
    pub ciphertext: Vec<u8>,
    pub signature: [u8; SIGNATURE_SIZE],
}

impl BacapBox {
    pub fn is_tombstone(&self) -> bool {
        self.ciphertext.is_empty()
    }

    pub fn encoded_len(&self) -> usize {
        32 + 4 + self.ciphertext.len() + SIGNATURE_SIZE
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(&self.box_id.to_bytes());
        out.extend_from_slice(&(self.ciphertext.len() as u32).to_be_bytes());
        out.extend_from_slice(&self.ciphertext);
        out.extend_from_slice(&self.signature);
        out
    }

    /// Decodes one box, returning it and the number of bytes consumed.
    pub fn decode_prefix(bytes: &[u8]) -> Result<(Self, usize), BacapError> {
        if bytes.len() < 36 + SIGNATURE_SIZE {
            return Err(BacapError::Malformed("box too short"));
        }
        let box_id = GroupElement::from_slice(&bytes[..32])?;
        let len = u32::from_be_bytes(bytes[32..36].try_into().expect("4 bytes")) as usize;
        let end = 36usize
            .checked_add(len)
            .and_then(|v| v.checked_add(SIGNATURE_SIZE))
            .ok_or(BacapError::Malformed("box length overflow"))?;
        if bytes.len() < end {
            return Err(BacapError::Malformed("box truncated"));
        }
        let ciphertext = bytes[36..36 + len].to_vec();
        let mut signature = [0u8; SIGNATURE_SIZE];
        signature.copy_from_slice(&bytes[36 + len..end]);
        Ok((
            BacapBox {
                box_id,
                ciphertext,
                signature,
            },
            end,
        ))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, BacapError> {
        let (b, used) = Self::decode_prefix(bytes)?;
        if used != bytes.len() {
            return Err(BacapError::Malformed("trailing bytes after box"));
        }
        Ok(b)
    }
}

pub fn generate_write_cap<R: RngCore + ?Sized>(rng: &mut R) -> WriteCap {
    let root_private = GroupScalar::random_nonzero(rng);
    let root_public = GroupElement::mul_base(&root_private);
    let index = rng.next_u64() % INITIAL_INDEX_BOUND;
    let mut state = [0u8; 32];
    rng.fill_bytes(&mut state);
    WriteCap {
        root_private,
        root_public,
        index,
        state: KdfState(state),
    }
}

fn step_info(index: u64) -> [u8; 18] {
    let mut info = [0u8; 18];
    info[..10].copy_from_slice(b"bacap/step");
    info[10..].copy_from_slice(&index.to_be_bytes());
    info
}

/// One step of the chain: derives the keys of box `index` under `ctx` and
/// the state for `index + 1`.
pub fn derive_next(
    root_public: &GroupElement,
    state: &KdfState,
    index: u64,
    ctx: &Context,
) -> Result<BoxKeys, BacapError> {
    if index == u64::MAX {
        return Err(BacapError::IndexOverflow);
    }
    let out = kdf_expand(state, &step_info(index), 3);
    let next_state = KdfState(out[0]);
    let e_i = KdfState(out[1]);
    let k_i = KdfState(out[2]);

    let mut enc_info = b"bacap/enc".to_vec();
    enc_info.extend_from_slice(&ctx.0);
    let encryption_key = kdf_expand(&e_i, &enc_info, 1)[0];

    let blinding = blinding_factor(&k_i, ctx);
    let box_id = crate::crypto::scalar_mult(root_public, &blinding);
    Ok(BoxKeys {
        index,
        box_id,
        encryption_key,
        blinding,
        next_state,
    })
}

fn blinding_factor(k_i: &KdfState, ctx: &Context) -> GroupScalar {
    let mut info = Vec::with_capacity(11 + 32 + 4);
    for attempt in 0u32.. {
        info.clear();
        info.extend_from_slice(b"bacap/blind");
        info.extend_from_slice(&ctx.0);
        info.extend_from_slice(&attempt.to_be_bytes());
        let halves = kdf_expand(k_i, &info, 2);
        let mut wide = [0u8; 64];
        wide[..32].copy_from_slice(&halves[0]);
        wide[32..].copy_from_slice(&halves[1]);
        let k = GroupScalar::from_wide_bytes(&wide);
        if !k.is_zero() {
            return k;
        }
    }
    unreachable!("u32 attempts exhausted")
}

/// Access to the derivation chain shared by both capability kinds.
pub trait Capability: Sized {
    fn root_public(&self) -> &GroupElement;
    fn state(&self) -> &KdfState;
    fn index(&self) -> u64;
    fn with_position(&self, state: KdfState, index: u64) -> Self;

    /// Keys of the box at the capability's current index.
    fn box_keys(&self, ctx: &Context) -> Result<BoxKeys, BacapError> {
        derive_next(self.root_public(), self.state(), self.index(), ctx)
    }

    /// Keys of the box at `index`, which must not precede the capability.
    fn box_keys_at(&self, index: u64, ctx: &Context) -> Result<BoxKeys, BacapError> {
        self.advance(index)?.box_keys(ctx)
    }

    /// Single-owner cursor over consecutive boxes starting at the current index.
    fn cursor(&self, ctx: Context) -> BoxCursor {
        BoxCursor {
            root_public: *self.root_public(),
            state: *self.state(),
            index: self.index(),
            ctx,
        }
    }

    /// Moves the chain forward to `to_index`. The returned capability holds
    /// only `H_{to_index}`; earlier states are not retained.
    fn advance(&self, to_index: u64) -> Result<Self, BacapError> {
        let current = self.index();
        if to_index < current {
            return Err(BacapError::IndexInPast {
                current,
                requested: to_index,
            });
        }
        let mut state = *self.state();
        for i in current..to_index {
            if i == u64::MAX {
                return Err(BacapError::IndexOverflow);
            }
            state = KdfState(kdf_expand(&state, &step_info(i), 1)[0]);
        }
        Ok(self.with_position(state, to_index))
    }
}

/// `advance_cap` for either capability kind.
pub fn advance_cap<C: Capability>(cap: &C, to_index: u64) -> Result<C, BacapError> {
    cap.advance(to_index)
}

impl Capability for WriteCap {
    fn root_public(&self) -> &GroupElement {
        &self.root_public
    }
    fn state(&self) -> &KdfState {
        &self.state
    }
    fn index(&self) -> u64 {
        self.index
    }
    fn with_position(&self, state: KdfState, index: u64) -> Self {
        WriteCap {
            state,
            index,
            ..self.clone()
        }
    }
}

impl Capability for ReadCap {
    fn root_public(&self) -> &GroupElement {
        &self.root_public
    }
    fn state(&self) -> &KdfState {
        &self.state
    }
    fn index(&self) -> u64 {
        self.index
    }
    fn with_position(&self, state: KdfState, index: u64) -> Self {
        ReadCap {
            root_public: self.root_public,
            state,
            index,
        }
    }
}

impl WriteCap {
    pub fn read_cap(&self) -> ReadCap {
        ReadCap {
            root_public: self.root_public,
            state: self.state,
            index: self.index,
        }
    }

    /// `S_i^ctx = S_R × K_i^ctx mod ℓ`.
    pub fn signing_scalar(&self, keys: &BoxKeys) -> GroupScalar {
        self.root_private.mul(&keys.blinding)
    }

    pub fn root_private(&self) -> &GroupScalar {
        &self.root_private
    }

    pub fn to_bytes(&self) -> [u8; WRITE_CAP_SIZE] {
        let mut out = [0u8; WRITE_CAP_SIZE];
        out[..32].copy_from_slice(&self.root_private.to_bytes());
        out[32..64].copy_from_slice(&self.state.0);
        out[64..].copy_from_slice(&self.index.to_be_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, BacapError> {
        if bytes.len() != WRITE_CAP_SIZE {
            return Err(BacapError::Malformed("write capability length"));
        }
        let root_private = GroupScalar::from_canonical_bytes(bytes[..32].try_into().expect("32"))?;
        if root_private.is_zero() {
            return Err(BacapError::Malformed("zero root scalar"));
        }
        Ok(WriteCap {
            root_public: GroupElement::mul_base(&root_private),
            root_private,
            state: KdfState(bytes[32..64].try_into().expect("32")),
            index: u64::from_be_bytes(bytes[64..].try_into().expect("8")),
        })
    }
}

impl ReadCap {
    pub fn to_bytes(&self) -> [u8; READ_CAP_SIZE] {
        let mut out = [0u8; READ_CAP_SIZE];
        out[..32].copy_from_slice(&self.root_public.to_bytes());
        out[32..64].copy_from_slice(&self.state.0);
        out[64..].copy_from_slice(&self.index.to_be_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, BacapError> {
        if bytes.len() != READ_CAP_SIZE {
            return Err(BacapError::Malformed("read capability length"));
        }
        Ok(ReadCap {
            root_public: GroupElement::from_slice(&bytes[..32])?,
            state: KdfState(bytes[32..64].try_into().expect("32")),
            index: u64::from_be_bytes(bytes[64..].try_into().expect("8")),
        })
    }
}

/// Walks a sequence one box at a time.
#[derive(Debug)]
pub struct BoxCursor {
    root_public: GroupElement,
    state: KdfState,
    index: u64,
    ctx: Context,
}

impl BoxCursor {
    pub fn index(&self) -> u64 {
        self.index
    }

    pub fn next_keys(&mut self) -> Result<BoxKeys, BacapError> {
        let keys = derive_next(&self.root_public, &self.state, self.index, &self.ctx)?;
        self.state = keys.next_state;
        self.index += 1;
        Ok(keys)
    }
}

impl Iterator for BoxCursor {
    type Item = BoxKeys;

    fn next(&mut self) -> Option<BoxKeys> {
        self.next_keys().ok()
    }
}

/// AEAD nonce: the first 12 bytes of a hash of the box ID. The full box ID
/// is bound as associated data.
pub fn box_nonce(box_id: &GroupElement) -> [u8; 12] {
    let h = hash256(b"bacap/nonce", &[&box_id.to_bytes()]);
    let mut n = [0u8; 12];
    n.copy_from_slice(&h[..12]);
    n
}

fn check_keys(keys: &BoxKeys, write_cap: &WriteCap) -> Result<GroupScalar, BacapError> {
    let signing = write_cap.signing_scalar(keys);
    if GroupElement::mul_base(&signing) != keys.box_id {
        return Err(BacapError::KeyMismatch);
    }
    Ok(signing)
}

/// Encrypts and signs `message` into box `keys.index`.
pub fn seal(keys: &BoxKeys, write_cap: &WriteCap, message: &[u8]) -> Result<BacapBox, BacapError> {
    let signing = check_keys(keys, write_cap)?;
    let id = keys.box_id.to_bytes();
    let ciphertext = aead_seal(&keys.encryption_key, &box_nonce(&keys.box_id), &id, message);
    let signature = sign_with_scalar(&signing, &keys.box_id, &ciphertext);
    Ok(BacapBox {
        box_id: keys.box_id,
        ciphertext,
        signature,
    })
}

/// Signed box with an empty ciphertext.
pub fn make_tombstone(keys: &BoxKeys, write_cap: &WriteCap) -> Result<BacapBox, BacapError> {
    let signing = check_keys(keys, write_cap)?;
    let signature = sign_with_scalar(&signing, &keys.box_id, &[]);
    Ok(BacapBox {
        box_id: keys.box_id,
        ciphertext: Vec::new(),
        signature,
    })
}

/// Universally verifiable: checks the signature under the box ID.
pub fn verify(b: &BacapBox) -> bool {
    verify_signature(&b.box_id, &b.ciphertext, &b.signature)
}

pub fn open(keys: &BoxKeys, b: &BacapBox) -> Result<Vec<u8>, BacapError> {
    if !verify(b) {
        return Err(BacapError::Verification);
    }
    if b.is_tombstone() {
        return Err(BacapError::Tombstone);
    }
    let id = keys.box_id.to_bytes();
    aead_open(&keys.encryption_key, &box_nonce(&keys.box_id), &id, &b.ciphertext)
        .map_err(|_| BacapError::Decryption)
}

/// `S_R = S_i × K_i^{-1} mod ℓ`. Anyone handed a derived signing scalar
/// together with its blinding factor learns the root key of the sequence.
pub fn recover_root(signing: &GroupScalar, blinding: &GroupScalar) -> Result<GroupScalar, BacapError> {
    Ok(signing.mul(&blinding.invert()?))
}
