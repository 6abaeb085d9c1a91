//! Sphinx packets with two interchangeable header primitives.
//!
//! * NIKE: α is a group element that each hop re-blinds by a factor derived
//!   from the shared secret. Unwrapping costs one exchange plus one blinding.
//! * KEM: α is a KEM ciphertext; the next hop's ciphertext travels inside
//!   that hop's β slot. Unwrapping costs one decapsulation.
//!
//! A wire packet is `version ∥ α ∥ β ∥ γ ∥ δ`, each field at a fixed offset
//! given by [`SphinxGeometry`]. δ is a stack of SPRP layers over
//! `0^32 ∥ body`; the zero prefix is checked at the terminal hop.

mod commands;
mod geometry;
mod packet;
mod replay;
mod surb;

pub use commands::{decode_commands, encode_commands, Command};
pub use geometry::{
    bandwidth, geometry, routing_commands_size, size_table, BandwidthReport, SphinxGeometry, BODY_FLAGS_SIZE,
    NODE_ID_SIZE, PAYLOAD_TAG_SIZE, RECIPIENT_SIZE, REFERENCE_MAX_HOPS, SURB_ID_SIZE, VERSION_AD, VERSION_AD_SIZE,
};
pub use packet::{decrypt_body_layers, HopKeys, NodeKey, Sphinx, SphinxPacket, SphinxSuite, Unwrapped};
pub use replay::ReplayCache;
pub use surb::{decode_body, encode_body, surb_decrypt, Body, Surb, SurbKeyStore, SurbKeys};

use crate::crypto::CryptoError;

pub type NodeId = [u8; NODE_ID_SIZE];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SphinxError {
    #[error("path must have between 1 and {max} hops, got {got}")]
    PathLength { got: usize, max: usize },
    #[error("payload of {got} bytes exceeds {max}")]
    PayloadTooLarge { got: usize, max: usize },
    #[error("malformed packet: {0}")]
    Malformed(&'static str),
    #[error("header MAC mismatch")]
    MacMismatch,
    #[error("replayed packet")]
    Replay,
    #[error("payload integrity tag mismatch")]
    PayloadIntegrity,
    #[error("node key does not match the packet suite")]
    SuiteMismatch,
    #[error("unknown SURB")]
    UnknownSurb,
    #[error("SURB already used")]
    SurbReused,
    #[error(transparent)]
    Crypto(#[from] CryptoError),
}

/// One hop of a path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hop {
    pub id: NodeId,
    pub public_key: Vec<u8>,
    /// Mixing delay the hop is told to apply before forwarding.
    pub delay_millis: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Terminal {
    /// Deliver the body to a queue at the last hop.
    Deliver { recipient: [u8; RECIPIENT_SIZE] },
    /// Hand the reply δ to the client owning this SURB.
    SurbReply { id: [u8; SURB_ID_SIZE] },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathSpec {
    pub hops: Vec<Hop>,
    pub terminal: Terminal,
}
