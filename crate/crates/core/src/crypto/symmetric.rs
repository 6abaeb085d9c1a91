//! MAC, stream cipher and wide-block cipher used by the packet formats.
//!
//! * MAC: HMAC-SHA256, 32-byte tags.
//! * Stream cipher: HMAC-SHA256 in counter mode, block `j` is
//!   `HMAC(key, "stream" ∥ be64(j))`.
//! * SPRP: the Lioness construction (Anderson–Biham) over the stream cipher
//!   above and HMAC-SHA256. The block is split into a 32-byte left half and
//!   a right half of arbitrary length; four rounds alternate
//!   `R ^= S(L ⊕ k1)`, `L ^= H(k2, R)`, `R ^= S(L ⊕ k3)`, `L ^= H(k4, R)`.

use hmac::{Hmac, Mac};
use sha2::Sha256;

use super::kdf::{kdf_expand, KdfState};
use super::CryptoError;

type HmacSha256 = Hmac<Sha256>;

pub const MAC_SIZE: usize = 32;
pub const STREAM_KEY_SIZE: usize = 32;
pub const SPRP_KEY_SIZE: usize = 64;
/// Smallest block Lioness accepts: a full left half plus one byte.
pub const SPRP_MIN_BLOCK: usize = 33;

pub fn mac(key: &[u8; 32], parts: &[&[u8]]) -> [u8; MAC_SIZE] {
    let mut m = <HmacSha256 as Mac>::new_from_slice(key).expect("HMAC accepts any key length");
    for p in parts {
        m.update(p);
    }
    m.finalize().into_bytes().into()
}

/// Constant-time tag comparison.
pub fn mac_verify(key: &[u8; 32], parts: &[&[u8]], tag: &[u8]) -> bool {
    let mut m = <HmacSha256 as Mac>::new_from_slice(key).expect("HMAC accepts any key length");
    for p in parts {
        m.update(p);
    }
    m.verify_slice(tag).is_ok()
}

/// XORs `len` keystream bytes, starting at `offset`, into `buf`.
pub fn xor_keystream_at(key: &[u8; STREAM_KEY_SIZE], offset: usize, buf: &mut [u8]) {
    let base = <HmacSha256 as Mac>::new_from_slice(key).expect("HMAC accepts any key length");
    let mut pos = 0;
    let mut block_idx = (offset / 32) as u64;
    let mut skip = offset % 32;
    while pos < buf.len() {
        let mut m = base.clone();
        m.update(b"stream");
        m.update(&block_idx.to_be_bytes());
        let block: [u8; 32] = m.finalize().into_bytes().into();
        let take = (32 - skip).min(buf.len() - pos);
        for (b, k) in buf[pos..pos + take].iter_mut().zip(&block[skip..skip + take]) {
            *b ^= k;
        }
        pos += take;
        skip = 0;
        block_idx += 1;
    }
}

pub fn xor_keystream(key: &[u8; STREAM_KEY_SIZE], buf: &mut [u8]) {
    xor_keystream_at(key, 0, buf)
}

pub fn keystream(key: &[u8; STREAM_KEY_SIZE], len: usize) -> Vec<u8> {
    let mut v = vec![0u8; len];
    xor_keystream(key, &mut v);
    v
}

struct LionessKeys([[u8; 32]; 4]);

impl LionessKeys {
    fn new(key: &[u8; SPRP_KEY_SIZE]) -> Self {
        let state = KdfState(super::kdf::hash256(b"lioness-key", &[key]));
        let ks = kdf_expand(&state, b"lioness-subkeys", 4);
        LionessKeys([ks[0], ks[1], ks[2], ks[3]])
    }
}

fn xor32(a: &[u8], b: &[u8; 32]) -> [u8; 32] {
    let mut out = [0u8; 32];
    for i in 0..32 {
        out[i] = a[i] ^ b[i];
    }
    out
}

fn round_stream(k: &[u8; 32], left: &[u8], right: &mut [u8]) {
    xor_keystream(&xor32(left, k), right);
}

fn round_hash(k: &[u8; 32], left: &mut [u8], right: &[u8]) {
    let h = mac(k, &[right]);
    for (l, x) in left.iter_mut().zip(h.iter()) {
        *l ^= x;
    }
}

pub fn sprp_encrypt(key: &[u8; SPRP_KEY_SIZE], block: &mut [u8]) -> Result<(), CryptoError> {
    if block.len() < SPRP_MIN_BLOCK {
        return Err(CryptoError::BlockTooShort);
    }
    let k = LionessKeys::new(key);
    let (l, r) = block.split_at_mut(32);
    round_stream(&k.0[0], l, r);
    round_hash(&k.0[1], l, r);
    round_stream(&k.0[2], l, r);
    round_hash(&k.0[3], l, r);
    Ok(())
}

pub fn sprp_decrypt(key: &[u8; SPRP_KEY_SIZE], block: &mut [u8]) -> Result<(), CryptoError> {
    if block.len() < SPRP_MIN_BLOCK {
        return Err(CryptoError::BlockTooShort);
    }
    let k = LionessKeys::new(key);
    let (l, r) = block.split_at_mut(32);
    round_hash(&k.0[3], l, r);
    round_stream(&k.0[2], l, r);
    round_hash(&k.0[1], l, r);
    round_stream(&k.0[0], l, r);
    Ok(())
}
