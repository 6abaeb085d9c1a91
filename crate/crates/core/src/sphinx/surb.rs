//! Single-use reply blocks and the forward body that carries them.

use std::collections::HashMap;

use rand::RngCore;

use crate::crypto::symmetric::{sprp_decrypt, sprp_encrypt, SPRP_KEY_SIZE};

use super::geometry::{SphinxGeometry, BODY_FLAGS_SIZE, NODE_ID_SIZE, PAYLOAD_TAG_SIZE, SURB_ID_SIZE};
use super::packet::decrypt_body_layers;
use super::{NodeId, PathSpec, Sphinx, SphinxError, SphinxPacket, Terminal};

/// What a replier receives: where to send, the reply header, and the key
/// for the outermost payload layer. Nothing in it names the client.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Surb {
    pub first_hop: NodeId,
    pub header: Vec<u8>,
    pub payload_key: [u8; SPRP_KEY_SIZE],
}

/// Kept by the SURB creator to decrypt the reply.
#[derive(Clone, PartialEq, Eq)]
pub struct SurbKeys {
    pub id: [u8; SURB_ID_SIZE],
    pub payload_key: [u8; SPRP_KEY_SIZE],
    pub hop_keys: Vec<[u8; SPRP_KEY_SIZE]>,
}

impl std::fmt::Debug for SurbKeys {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SurbKeys").field("id", &self.id).finish_non_exhaustive()
    }
}

impl Surb {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(NODE_ID_SIZE + self.header.len() + SPRP_KEY_SIZE);
        out.extend_from_slice(&self.first_hop);
        out.extend_from_slice(&self.header);
        out.extend_from_slice(&self.payload_key);
        out
    }

    pub fn from_bytes(g: &SphinxGeometry, bytes: &[u8]) -> Result<Self, SphinxError> {
        if bytes.len() != g.surb_size {
            return Err(SphinxError::Malformed("SURB length"));
        }
        let h_end = NODE_ID_SIZE + g.header_size;
        Ok(Surb {
            first_hop: bytes[..NODE_ID_SIZE].try_into().expect("len"),
            header: bytes[NODE_ID_SIZE..h_end].to_vec(),
            payload_key: bytes[h_end..].try_into().expect("len"),
        })
    }
}

impl Sphinx {
    /// `surb_create`: the reply path must end in [`Terminal::SurbReply`].
    pub fn create_surb(&self, reply_path: &PathSpec, rng: &mut dyn RngCore) -> Result<(Surb, SurbKeys), SphinxError> {
        let Terminal::SurbReply { id } = reply_path.terminal else {
            return Err(SphinxError::Malformed("reply path must end in a SURB reply"));
        };
        let h = self.build_header(reply_path, rng)?;
        let mut payload_key = [0u8; SPRP_KEY_SIZE];
        rng.fill_bytes(&mut payload_key);
        let header = SphinxPacket {
            alpha: h.alpha,
            beta: h.beta,
            gamma: h.gamma,
            delta: Vec::new(),
        }
        .header_bytes();
        Ok((
            Surb {
                first_hop: reply_path.hops[0].id,
                header,
                payload_key,
            },
            SurbKeys {
                id,
                payload_key,
                hop_keys: h.sprp_keys,
            },
        ))
    }

    /// `surb_reply`: the replier's packet and the hop to send it to.
    pub fn surb_reply(&self, surb: &Surb, body: &[u8]) -> Result<(NodeId, SphinxPacket), SphinxError> {
        let g = self.geometry();
        if body.len() > g.body_size {
            return Err(SphinxError::PayloadTooLarge {
                got: body.len(),
                max: g.body_size,
            });
        }
        let mut delta = vec![0u8; g.delta_size];
        delta[PAYLOAD_TAG_SIZE..PAYLOAD_TAG_SIZE + body.len()].copy_from_slice(body);
        sprp_encrypt(&surb.payload_key, &mut delta)?;
        Ok((surb.first_hop, SphinxPacket::from_header(g, &surb.header, delta)?))
    }
}

/// `surb_decrypt`: undoes the reply path's layers and the replier's layer.
pub fn surb_decrypt(keys: &SurbKeys, delta: &[u8]) -> Result<Vec<u8>, SphinxError> {
    let mut d = delta.to_vec();
    decrypt_body_layers(&keys.hop_keys, &mut d)?;
    sprp_decrypt(&keys.payload_key, &mut d)?;
    if d[..PAYLOAD_TAG_SIZE].iter().any(|&x| x != 0) {
        return Err(SphinxError::PayloadIntegrity);
    }
    Ok(d[PAYLOAD_TAG_SIZE..].to_vec())
}

/// Creator-side table of outstanding SURBs. Each is consumable once.
#[derive(Debug, Default)]
pub struct SurbKeyStore {
    pending: HashMap<[u8; SURB_ID_SIZE], SurbKeys>,
    used: std::collections::HashSet<[u8; SURB_ID_SIZE]>,
}

impl SurbKeyStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, keys: SurbKeys) {
        self.pending.insert(keys.id, keys);
    }

    pub fn pending(&self) -> usize {
        self.pending.len()
    }

    pub fn consume(&mut self, id: &[u8; SURB_ID_SIZE], delta: &[u8]) -> Result<Vec<u8>, SphinxError> {
        if self.used.contains(id) {
            return Err(SphinxError::SurbReused);
        }
        let keys = self.pending.get(id).ok_or(SphinxError::UnknownSurb)?;
        let body = surb_decrypt(keys, delta)?;
        self.pending.remove(id);
        self.used.insert(*id);
        Ok(body)
    }
}

/// Decoded forward body: optional SURB followed by the payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Body {
    pub surb: Option<Surb>,
    pub payload: Vec<u8>,
}

const FLAG_HAS_SURB: u16 = 0x0001;

/// `flags ∥ SURB slot ∥ payload`, `body_size` bytes. The payload is padded
/// with zeros to `payload_size`.
pub fn encode_body(g: &SphinxGeometry, surb: Option<&Surb>, payload: &[u8]) -> Result<Vec<u8>, SphinxError> {
    if payload.len() > g.payload_size {
        return Err(SphinxError::PayloadTooLarge {
            got: payload.len(),
            max: g.payload_size,
        });
    }
    let mut out = Vec::with_capacity(g.body_size);
    let flags = if surb.is_some() { FLAG_HAS_SURB } else { 0 };
    out.extend_from_slice(&flags.to_be_bytes());
    match surb {
        Some(s) => {
            let b = s.to_bytes();
            if b.len() != g.surb_size {
                return Err(SphinxError::Malformed("SURB geometry"));
            }
            out.extend_from_slice(&b);
        }
        None => out.resize(BODY_FLAGS_SIZE + g.surb_size, 0),
    }
    out.extend_from_slice(payload);
    out.resize(g.body_size, 0);
    Ok(out)
}

pub fn decode_body(g: &SphinxGeometry, body: &[u8]) -> Result<Body, SphinxError> {
    if body.len() != g.body_size {
        return Err(SphinxError::Malformed("body length"));
    }
    let flags = u16::from_be_bytes([body[0], body[1]]);
    if flags & !FLAG_HAS_SURB != 0 {
        return Err(SphinxError::Malformed("unknown body flags"));
    }
    let slot = &body[BODY_FLAGS_SIZE..BODY_FLAGS_SIZE + g.surb_size];
    let surb = if flags & FLAG_HAS_SURB != 0 {
        Some(Surb::from_bytes(g, slot)?)
    } else {
        None
    };
    Ok(Body {
        surb,
        payload: body[BODY_FLAGS_SIZE + g.surb_size..].to_vec(),
    })
}
