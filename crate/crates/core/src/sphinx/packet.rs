use std::sync::Arc;

use rand::RngCore;

use crate::crypto::catalog::SuiteKind;
use crate::crypto::kdf::{hash256, kdf_bytes};
use crate::crypto::symmetric::{keystream, mac, mac_verify, sprp_decrypt, sprp_encrypt, MAC_SIZE, SPRP_KEY_SIZE};
use crate::crypto::{Kem, KemKeypair, Nike, NikeKeypair};

use super::commands::{decode_commands, encode_commands, Command};
use super::geometry::{routing_commands_size, SphinxGeometry, PAYLOAD_TAG_SIZE, VERSION_AD, VERSION_AD_SIZE};
use super::{Hop, NodeId, PathSpec, ReplayCache, SphinxError, Terminal};

#[derive(Clone)]
pub enum SphinxSuite {
    Nike(Arc<dyn Nike>),
    Kem(Arc<dyn Kem>),
}

impl SphinxSuite {
    fn kind(&self) -> SuiteKind {
        match self {
            SphinxSuite::Nike(_) => SuiteKind::Nike,
            SphinxSuite::Kem(_) => SuiteKind::Kem,
        }
    }
}

/// A node's long-term private key for the suite its packets use.
#[derive(Debug, Clone)]
pub enum NodeKey {
    Nike(NikeKeypair),
    Kem(KemKeypair),
}

impl NodeKey {
    pub fn public(&self) -> &[u8] {
        match self {
            NodeKey::Nike(k) => &k.public,
            NodeKey::Kem(k) => &k.public,
        }
    }
}

/// Keys one hop derives from its shared secret.
#[derive(Clone, PartialEq, Eq)]
pub struct HopKeys {
    pub mac: [u8; 32],
    pub stream: [u8; 32],
    pub sprp: [u8; SPRP_KEY_SIZE],
    pub blinding: [u8; 64],
    pub replay_tag: [u8; 32],
}

impl HopKeys {
    pub fn derive(secret: &[u8]) -> Self {
        let b = kdf_bytes(secret, b"sphinx/hop-keys", 32 + 32 + SPRP_KEY_SIZE + 64);
        HopKeys {
            mac: b[0..32].try_into().expect("len"),
            stream: b[32..64].try_into().expect("len"),
            sprp: b[64..128].try_into().expect("len"),
            blinding: b[128..192].try_into().expect("len"),
            replay_tag: hash256(b"sphinx/replay", &[secret]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SphinxPacket {
    pub alpha: Vec<u8>,
    pub beta: Vec<u8>,
    pub gamma: [u8; MAC_SIZE],
    pub delta: Vec<u8>,
}

impl SphinxPacket {
    pub fn header_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(VERSION_AD_SIZE + self.alpha.len() + self.beta.len() + MAC_SIZE);
        out.extend_from_slice(&VERSION_AD);
        out.extend_from_slice(&self.alpha);
        out.extend_from_slice(&self.beta);
        out.extend_from_slice(&self.gamma);
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.header_bytes();
        out.extend_from_slice(&self.delta);
        out
    }

    pub fn from_header(g: &SphinxGeometry, header: &[u8], delta: Vec<u8>) -> Result<Self, SphinxError> {
        if header.len() != g.header_size {
            return Err(SphinxError::Malformed("header length"));
        }
        if header[..VERSION_AD_SIZE] != VERSION_AD {
            return Err(SphinxError::Malformed("unknown version"));
        }
        if delta.len() != g.delta_size {
            return Err(SphinxError::Malformed("payload length"));
        }
        let a_end = VERSION_AD_SIZE + g.alpha_size;
        let b_end = a_end + g.beta_size;
        Ok(SphinxPacket {
            alpha: header[VERSION_AD_SIZE..a_end].to_vec(),
            beta: header[a_end..b_end].to_vec(),
            gamma: header[b_end..].try_into().expect("len"),
            delta,
        })
    }

    pub fn from_bytes(g: &SphinxGeometry, bytes: &[u8]) -> Result<Self, SphinxError> {
        if bytes.len() != g.packet_size {
            return Err(SphinxError::Malformed("packet length"));
        }
        Self::from_header(g, &bytes[..g.header_size], bytes[g.header_size..].to_vec())
    }
}

/// Outcome of processing a packet at one node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Unwrapped {
    Forward {
        next_hop: NodeId,
        delay_millis: u32,
        packet: SphinxPacket,
    },
    Deliver {
        recipient: [u8; 64],
        body: Vec<u8>,
    },
    SurbReply {
        surb_id: [u8; 16],
        delta: Vec<u8>,
    },
}

/// A routing header plus the per-hop SPRP keys it commits to.
pub(crate) struct BuiltHeader {
    pub alpha: Vec<u8>,
    pub beta: Vec<u8>,
    pub gamma: [u8; MAC_SIZE],
    pub sprp_keys: Vec<[u8; SPRP_KEY_SIZE]>,
}

pub struct Sphinx {
    geometry: SphinxGeometry,
    suite: SphinxSuite,
}

fn mac_header(key: &[u8; 32], alpha: &[u8], beta: &[u8]) -> [u8; MAC_SIZE] {
    mac(key, &[&VERSION_AD, alpha, beta])
}

impl Sphinx {
    pub fn new_nike(nike: Arc<dyn Nike>, max_hops: usize, payload_size: usize) -> Self {
        let s = nike.suite();
        let geometry = SphinxGeometry::new(s.name, SuiteKind::Nike, s.public_key_size, max_hops, payload_size);
        Sphinx {
            geometry,
            suite: SphinxSuite::Nike(nike),
        }
    }

    pub fn new_kem(kem: Arc<dyn Kem>, max_hops: usize, payload_size: usize) -> Self {
        let s = kem.suite();
        let geometry = SphinxGeometry::new(s.name, SuiteKind::Kem, s.ciphertext_size, max_hops, payload_size);
        Sphinx {
            geometry,
            suite: SphinxSuite::Kem(kem),
        }
    }

    pub fn geometry(&self) -> &SphinxGeometry {
        &self.geometry
    }

    pub fn suite(&self) -> &SphinxSuite {
        &self.suite
    }

    pub fn generate_node_key(&self, rng: &mut dyn RngCore) -> NodeKey {
        match &self.suite {
            SphinxSuite::Nike(n) => NodeKey::Nike(n.generate_keypair(rng)),
            SphinxSuite::Kem(k) => NodeKey::Kem(k.generate_keypair(rng)),
        }
    }

    /// Per-hop α values and shared secrets for `hops`.
    fn hop_secrets(&self, hops: &[Hop], rng: &mut dyn RngCore) -> Result<(Vec<Vec<u8>>, Vec<HopKeys>), SphinxError> {
        let mut alphas = Vec::with_capacity(hops.len());
        let mut keys = Vec::with_capacity(hops.len());
        match &self.suite {
            SphinxSuite::Nike(nike) => {
                let eph = nike.generate_keypair(rng);
                let mut x = eph.private;
                let mut alpha = eph.public;
                for hop in hops {
                    let s = nike.shared_secret(&x, &hop.public_key)?;
                    let k = HopKeys::derive(&s);
                    alphas.push(alpha.clone());
                    alpha = nike.blind_public(&alpha, &k.blinding)?;
                    x = nike.blind_private(&x, &k.blinding)?;
                    keys.push(k);
                }
            }
            SphinxSuite::Kem(kem) => {
                for hop in hops {
                    let enc = kem.encapsulate(&hop.public_key, rng)?;
                    alphas.push(enc.ciphertext);
                    keys.push(HopKeys::derive(&enc.shared_secret));
                }
            }
        }
        Ok((alphas, keys))
    }

    pub(crate) fn build_header(
        &self,
        path: &PathSpec,
        rng: &mut dyn RngCore,
    ) -> Result<BuiltHeader, SphinxError> {
        let g = &self.geometry;
        let n = path.hops.len();
        if n == 0 || n > g.max_hops {
            return Err(SphinxError::PathLength { got: n, max: g.max_hops });
        }
        let (alphas, keys) = self.hop_secrets(&path.hops, rng)?;
        let r = g.slot_size;
        let beta_len = g.beta_size;
        let streams: Vec<Vec<u8>> = keys.iter().map(|k| keystream(&k.stream, beta_len + r)).collect();

        // filler: what hops 1..n-1 append while shifting β.
        let mut filler: Vec<u8> = Vec::new();
        for (i, stream) in streams.iter().enumerate().take(n - 1) {
            filler.extend(std::iter::repeat(0u8).take(r));
            let start = beta_len + r - (i + 1) * r;
            for (f, s) in filler.iter_mut().zip(&stream[start..]) {
                *f ^= s;
            }
        }

        let terminal_cmds = match &path.terminal {
            Terminal::Deliver { recipient } => vec![Command::Recipient { id: *recipient }],
            Terminal::SurbReply { id } => vec![Command::SurbReply { id: *id }],
        };
        let ct_len = if self.suite.kind() == SuiteKind::Kem { g.alpha_size } else { 0 };

        let mut beta = {
            let mut slot = vec![0u8; ct_len];
            slot.extend(encode_commands(&terminal_cmds, routing_commands_size())?);
            let plain_len = beta_len - (n - 1) * r;
            slot.resize(plain_len, 0);
            for (b, s) in slot.iter_mut().zip(&streams[n - 1]) {
                *b ^= s;
            }
            slot.extend_from_slice(&filler);
            slot
        };
        let mut gamma = mac_header(&keys[n - 1].mac, &alphas[n - 1], &beta);

        for i in (0..n - 1).rev() {
            let next = &path.hops[i + 1];
            let mut slot = Vec::with_capacity(beta_len);
            if ct_len > 0 {
                slot.extend_from_slice(&alphas[i + 1]);
            }
            let cmds = [
                Command::NextHop { id: next.id, mac: gamma },
                Command::Delay {
                    millis: path.hops[i].delay_millis,
                },
            ];
            slot.extend(encode_commands(&cmds, routing_commands_size())?);
            slot.extend_from_slice(&beta[..beta_len - r]);
            for (b, s) in slot.iter_mut().zip(&streams[i]) {
                *b ^= s;
            }
            beta = slot;
            gamma = mac_header(&keys[i].mac, &alphas[i], &beta);
        }

        Ok(BuiltHeader {
            alpha: alphas.into_iter().next().expect("non-empty"),
            beta,
            gamma,
            sprp_keys: keys.iter().map(|k| k.sprp).collect(),
        })
    }

    /// Builds a forward packet carrying `body`, zero-padded to `body_size`.
    pub fn wrap(&self, path: &PathSpec, body: &[u8], rng: &mut dyn RngCore) -> Result<SphinxPacket, SphinxError> {
        let g = &self.geometry;
        if body.len() > g.body_size {
            return Err(SphinxError::PayloadTooLarge {
                got: body.len(),
                max: g.body_size,
            });
        }
        let h = self.build_header(path, rng)?;
        let mut delta = vec![0u8; g.delta_size];
        delta[PAYLOAD_TAG_SIZE..PAYLOAD_TAG_SIZE + body.len()].copy_from_slice(body);
        for k in h.sprp_keys.iter().rev() {
            sprp_encrypt(k, &mut delta)?;
        }
        Ok(SphinxPacket {
            alpha: h.alpha,
            beta: h.beta,
            gamma: h.gamma,
            delta,
        })
    }

    /// Processes a packet at the node holding `key`. When `replay` is given,
    /// the replay tag is checked and recorded under `epoch` after the MAC
    /// verifies.
    pub fn unwrap(
        &self,
        key: &NodeKey,
        packet: &SphinxPacket,
        replay: Option<(&ReplayCache, u64)>,
    ) -> Result<Unwrapped, SphinxError> {
        let g = &self.geometry;
        if packet.alpha.len() != g.alpha_size || packet.beta.len() != g.beta_size || packet.delta.len() != g.delta_size {
            return Err(SphinxError::Malformed("field length"));
        }
        let secret: Vec<u8> = match (&self.suite, key) {
            (SphinxSuite::Nike(nike), NodeKey::Nike(kp)) => nike.shared_secret(&kp.private, &packet.alpha)?,
            (SphinxSuite::Kem(kem), NodeKey::Kem(kp)) => kem.decapsulate(kp, &packet.alpha)?.to_vec(),
            _ => return Err(SphinxError::SuiteMismatch),
        };
        let keys = HopKeys::derive(&secret);
        if !mac_verify(&keys.mac, &[&VERSION_AD, &packet.alpha, &packet.beta], &packet.gamma) {
            return Err(SphinxError::MacMismatch);
        }
        if let Some((cache, epoch)) = replay {
            if !cache.check_and_insert(epoch, keys.replay_tag) {
                return Err(SphinxError::Replay);
            }
        }

        let r = g.slot_size;
        let mut b = packet.beta.clone();
        b.resize(g.beta_size + r, 0);
        for (x, s) in b.iter_mut().zip(keystream(&keys.stream, g.beta_size + r)) {
            *x ^= s;
        }
        let ct_len = if self.suite.kind() == SuiteKind::Kem { g.alpha_size } else { 0 };
        let cmds = decode_commands(&b[ct_len..r])?;

        let mut delta = packet.delta.clone();
        sprp_decrypt(&keys.sprp, &mut delta)?;

        let mut next = None;
        let mut delay = 0;
        for c in &cmds {
            match c {
                Command::NextHop { id, mac } => next = Some((*id, *mac)),
                Command::Delay { millis } => delay = *millis,
                Command::Recipient { id } => {
                    if delta[..PAYLOAD_TAG_SIZE].iter().any(|&x| x != 0) {
                        return Err(SphinxError::PayloadIntegrity);
                    }
                    return Ok(Unwrapped::Deliver {
                        recipient: *id,
                        body: delta[PAYLOAD_TAG_SIZE..].to_vec(),
                    });
                }
                Command::SurbReply { id } => {
                    return Ok(Unwrapped::SurbReply { surb_id: *id, delta });
                }
            }
        }
        let (next_hop, gamma) = next.ok_or(SphinxError::Malformed("no routing command"))?;
        let alpha = match &self.suite {
            SphinxSuite::Nike(nike) => nike.blind_public(&packet.alpha, &keys.blinding)?,
            SphinxSuite::Kem(_) => b[..ct_len].to_vec(),
        };
        Ok(Unwrapped::Forward {
            next_hop,
            delay_millis: delay,
            packet: SphinxPacket {
                alpha,
                beta: b[r..].to_vec(),
                gamma,
                delta,
            },
        })
    }
}

/// Removes the SPRP layers the hops of a reply path applied, in order.
pub fn decrypt_body_layers(sprp_keys: &[[u8; SPRP_KEY_SIZE]], delta: &mut [u8]) -> Result<(), SphinxError> {
    for k in sprp_keys.iter().rev() {
        sprp_encrypt(k, delta)?;
    }
    Ok(())
}
