//! Replicated box storage reached through blind couriers.
//!
//! Clients seal BACAP boxes into [`envelope::Envelope`]s addressed to
//! replicas' per-epoch keys and hand them to a randomly chosen courier. The
//! courier sees replica ids and opaque bytes only. Writes go to two
//! intermediate replicas picked independently of the box's shard; those
//! persist the box and forward it to the `k` final replicas chosen by
//! [`shard::ShardMap`]. Reads go to one final replica, which answers with a
//! fixed-size encrypted reply whether or not the box exists and, if it does
//! not, remembers the reader until a write arrives.
//!
//! [`net::PigeonholeNet`] runs replicas and couriers as actors on a
//! deterministic event queue with injectable link drops and outages, and
//! [`channel`] builds acknowledged channels with all-or-nothing backfill on
//! top of it.

pub mod channel;
pub mod courier;
pub mod envelope;
pub mod net;
pub mod replica;
pub mod shard;
pub mod store;

pub use channel::{ChannelMessage, ChannelReader, ChannelWriter};
pub use courier::{Courier, CourierReply, CourierRequest};
pub use envelope::{open_envelope, seal_envelope, Envelope, ReadResult, ReplicaCommand};
pub use net::{FaultPlan, Outage, PigeonholeNet};
pub use replica::Replica;
pub use shard::{shard_select, ReplicaDescriptor, ShardMap};
pub use store::{min_retention_secs, PutOutcome, ReplicaRecord, ReplicaStore};

use serde::{Deserialize, Serialize};

use crate::bacap::BacapError;
use crate::crypto::CryptoError;

/// Simulated milliseconds.
pub type SimTime = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ReplicaId(pub u16);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CourierId(pub u16);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ClientId(pub u32);

/// Opaque single-use reply handle standing in for a Sphinx SURB on the
/// client-courier leg. Carries no client identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SurbHandle(pub u64);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PigeonholeError {
    #[error("replication factor {k} invalid for {n} replicas")]
    ReplicationFactor { k: usize, n: usize },
    #[error("malformed: {0}")]
    Malformed(&'static str),
    #[error("envelope not addressed to this replica")]
    NotAddressed,
    #[error("decryption failed")]
    Decryption,
    #[error("box signature invalid")]
    BadSignature,
    #[error("envelope epoch {0} outside the accepted key window")]
    StaleEpoch(u64),
    #[error("io: {0}")]
    Io(String),
    #[error(transparent)]
    Bacap(#[from] BacapError),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
}

impl From<std::io::Error> for PigeonholeError {
    fn from(e: std::io::Error) -> Self {
        PigeonholeError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PigeonholeConfig {
    pub replicas: usize,
    pub k: usize,
    pub couriers: usize,
    pub intermediate_replicas: usize,
    /// BACAP plaintext size of channel messages.
    pub message_size: usize,
    pub pending_read_delay_ms: (SimTime, SimTime),
    pub courier_cache_ttl_ms: SimTime,
    pub epoch_ms: SimTime,
    /// Past epochs whose replica keys are still accepted.
    pub epoch_key_window: u64,
    pub retention_weeks: usize,
    /// One-way client-courier latency through the mixnet.
    pub mix_latency_ms: (SimTime, SimTime),
    pub link_latency_ms: SimTime,
    pub rpc_timeout_ms: SimTime,
    pub client_timeout_ms: SimTime,
    pub client_max_attempts: u32,
    pub courier_rotation_retries: u32,
    pub copy_read_max_attempts: u32,
    pub stage_max_attempts: u32,
    /// Unacked messages older than this are backfilled on the next send.
    pub retransmit_after_ms: SimTime,
}

impl Default for PigeonholeConfig {
    fn default() -> Self {
        PigeonholeConfig {
            replicas: 6,
            k: 2,
            couriers: 3,
            intermediate_replicas: 2,
            message_size: 256,
            pending_read_delay_ms: (1_000, 30_000),
            courier_cache_ttl_ms: 20 * 60 * 1000,
            epoch_ms: 20 * 60 * 1000,
            epoch_key_window: 3,
            retention_weeks: 2,
            mix_latency_ms: (200, 2_000),
            link_latency_ms: 20,
            rpc_timeout_ms: 5_000,
            client_timeout_ms: 15_000,
            client_max_attempts: 24,
            courier_rotation_retries: 8,
            copy_read_max_attempts: 6,
            stage_max_attempts: 4,
            retransmit_after_ms: 24 * 3600 * 1000,
        }
    }
}

impl PigeonholeConfig {
    /// Ciphertext size of a channel box.
    pub fn box_ciphertext_size(&self) -> usize {
        self.message_size + crate::crypto::aead::AEAD_TAG_SIZE
    }

    /// Encoded size of a write envelope carrying one channel box.
    pub fn write_envelope_size(&self) -> usize {
        let boxed = 32 + 4 + self.box_ciphertext_size() + 64;
        let command = 1 + boxed;
        let message = command + crate::crypto::aead::AEAD_TAG_SIZE;
        8 + envelope::EPHEMERAL_SIZE
            + envelope::HYBRID_STUB_SIZE
            + 1
            + self.intermediate_replicas * (2 + envelope::WRAPPED_DEK_SIZE)
            + 4
            + message
    }

    /// BACAP plaintext size of a temporary-channel entry.
    pub fn temp_entry_size(&self) -> usize {
        1 + 4 + self.write_envelope_size()
    }

    /// Largest encoded box any replica returns; replies pad to this.
    pub fn max_box_len(&self) -> usize {
        32 + 4 + self.temp_entry_size() + crate::crypto::aead::AEAD_TAG_SIZE + 64
    }
}

#[cfg(test)]
mod scenario_tests;
