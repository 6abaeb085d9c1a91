//! Acknowledged one-way channels over BACAP box sequences.
//!
//! Each plaintext is a fixed-size frame: ack flag, acked count, payload
//! length, payload, zero padding. Acknowledgements ride only on user
//! messages travelling in the opposite direction. When a writer sends while
//! holding messages unacked for longer than the retransmit interval, it
//! first rewrites them through a temporary channel and a courier copy, so a
//! backfill lands completely or not at all.

use std::collections::BTreeMap;

use crate::bacap::{generate_write_cap, open as bacap_open, seal, BacapError, Capability, Context, ReadCap, WriteCap};

use super::courier::TempEntry;
use super::envelope::ReadResult;
use super::net::{OpResult, PigeonholeNet};
use super::{PigeonholeError, SimTime};

const FRAME_HEADER: usize = 1 + 8 + 2;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelMessage {
    /// Count of the peer's messages received contiguously.
    pub ack: Option<u64>,
    pub payload: Vec<u8>,
}

impl ChannelMessage {
    pub fn max_payload(message_size: usize) -> usize {
        message_size - FRAME_HEADER
    }

    pub fn encode(&self, message_size: usize) -> Result<Vec<u8>, PigeonholeError> {
        if self.payload.len() > Self::max_payload(message_size) {
            return Err(PigeonholeError::Malformed("payload exceeds channel message size"));
        }
        let mut out = Vec::with_capacity(message_size);
        out.push(self.ack.is_some() as u8);
        out.extend_from_slice(&self.ack.unwrap_or(0).to_be_bytes());
        out.extend_from_slice(&(self.payload.len() as u16).to_be_bytes());
        out.extend_from_slice(&self.payload);
        out.resize(message_size, 0);
        Ok(out)
    }

    pub fn decode(b: &[u8]) -> Result<Self, PigeonholeError> {
        if b.len() < FRAME_HEADER || b[0] > 1 {
            return Err(PigeonholeError::Malformed("channel frame"));
        }
        let ack = u64::from_be_bytes(b[1..9].try_into().expect("8"));
        let len = u16::from_be_bytes(b[9..11].try_into().expect("2")) as usize;
        let payload = b
            .get(FRAME_HEADER..FRAME_HEADER + len)
            .ok_or(PigeonholeError::Malformed("channel frame length"))?;
        Ok(ChannelMessage {
            ack: (b[0] == 1).then_some(ack),
            payload: payload.to_vec(),
        })
    }
}

#[derive(Debug, Clone)]
struct Unacked {
    frame: Vec<u8>,
    sent_at: SimTime,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BackfillReport {
    pub ok: bool,
    pub items: u32,
    /// Box IDs of the temporary channel used, in order.
    pub temp_box_ids: Vec<[u8; 32]>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SendReport {
    pub offset: u64,
    pub result: OpResult,
    pub backfill: Option<BackfillReport>,
}

pub struct ChannelWriter {
    cap: WriteCap,
    ctx: Context,
    next: u64,
    acked: u64,
    unacked: BTreeMap<u64, Unacked>,
}

impl ChannelWriter {
    pub fn new(cap: WriteCap, ctx: Context) -> Self {
        ChannelWriter {
            cap,
            ctx,
            next: 0,
            acked: 0,
            unacked: BTreeMap::new(),
        }
    }

    pub fn read_cap(&self) -> ReadCap {
        self.cap.read_cap()
    }

    pub fn context(&self) -> Context {
        self.ctx
    }

    pub fn sent(&self) -> u64 {
        self.next
    }

    pub fn acked(&self) -> u64 {
        self.acked
    }

    pub fn unacked(&self) -> Vec<u64> {
        self.unacked.keys().copied().collect()
    }

    /// Applies a peer acknowledgement. Counts only move forward.
    pub fn on_ack(&mut self, count: u64) {
        let count = count.min(self.next);
        if count > self.acked {
            self.acked = count;
            self.unacked = self.unacked.split_off(&count);
        }
    }

    fn box_at(&self, offset: u64, frame: &[u8]) -> Result<crate::bacap::BacapBox, PigeonholeError> {
        let keys = self.cap.box_keys_at(self.cap.index() + offset, &self.ctx)?;
        Ok(seal(&keys, &self.cap, frame)?)
    }

    /// Sends `payload`, piggybacking `ack`. Stale unacked messages are
    /// backfilled first.
    pub fn send(&mut self, net: &mut PigeonholeNet, payload: &[u8], ack: Option<u64>) -> Result<SendReport, PigeonholeError> {
        let frame = ChannelMessage {
            ack,
            payload: payload.to_vec(),
        }
        .encode(net.cfg.message_size)?;
        let backfill = self.flush_stale(net)?;
        let offset = self.next;
        let b = self.box_at(offset, &frame)?;
        let result = net.write(&b)?;
        self.next += 1;
        self.unacked.insert(
            offset,
            Unacked {
                frame,
                sent_at: net.now(),
            },
        );
        Ok(SendReport {
            offset,
            result,
            backfill,
        })
    }

    /// Backfills every unacked message older than the retransmit interval
    /// through one copy command. `None` when nothing is stale.
    pub fn flush_stale(&mut self, net: &mut PigeonholeNet) -> Result<Option<BackfillReport>, PigeonholeError> {
        let now = net.now();
        let stale: Vec<u64> = self
            .unacked
            .iter()
            .filter(|(_, u)| now.saturating_sub(u.sent_at) >= net.cfg.retransmit_after_ms)
            .map(|(o, _)| *o)
            .collect();
        if stale.is_empty() {
            return Ok(None);
        }
        self.backfill(net, &stale).map(Some)
    }

    fn backfill(&mut self, net: &mut PigeonholeNet, offsets: &[u64]) -> Result<BackfillReport, PigeonholeError> {
        let temp = generate_write_cap(net.rng());
        let tctx = net.context();
        let entry_size = net.cfg.temp_entry_size();
        let mut temp_box_ids = Vec::with_capacity(offsets.len());
        let mut failed = false;
        for (j, off) in offsets.iter().enumerate() {
            let frame = &self.unacked[off].frame;
            let envelope = net.seal_write(&self.box_at(*off, frame)?)?;
            let entry = TempEntry {
                last: j + 1 == offsets.len(),
                envelope,
            }
            .encode(entry_size)?;
            let keys = temp.box_keys_at(temp.index() + j as u64, &tctx)?;
            temp_box_ids.push(keys.box_id.to_bytes());
            let tb = seal(&keys, &temp, &entry)?;
            if net.write(&tb)? != OpResult::WriteAcked {
                failed = true;
                break;
            }
        }
        let (ok, items) = if failed {
            (false, 0)
        } else {
            match net.copy(temp.to_bytes().to_vec(), tctx) {
                OpResult::Copy { ok, items } => (ok, items),
                _ => (false, 0),
            }
        };
        if ok {
            let now = net.now();
            for off in offsets {
                if let Some(u) = self.unacked.get_mut(off) {
                    u.sent_at = now;
                }
            }
        }
        Ok(BackfillReport { ok, items, temp_box_ids })
    }
}

pub struct ChannelReader {
    cap: ReadCap,
    ctx: Context,
    next: u64,
    received: BTreeMap<u64, ChannelMessage>,
}

impl ChannelReader {
    pub fn new(cap: ReadCap, ctx: Context) -> Self {
        ChannelReader {
            cap,
            ctx,
            next: 0,
            received: BTreeMap::new(),
        }
    }

    /// Contiguous count received; the value to acknowledge.
    pub fn ack_value(&self) -> u64 {
        self.next
    }

    pub fn received(&self) -> &BTreeMap<u64, ChannelMessage> {
        &self.received
    }

    /// Fetches the next message, or `None` if its box is not stored yet.
    pub fn poll(&mut self, net: &mut PigeonholeNet) -> Result<Option<ChannelMessage>, PigeonholeError> {
        let keys = self.cap.box_keys_at(self.cap.index() + self.next, &self.ctx)?;
        match net.read(&keys.box_id.to_bytes())? {
            OpResult::Read(ReadResult::Found(b)) => match bacap_open(&keys, &b) {
                Ok(pt) => {
                    let m = ChannelMessage::decode(&pt)?;
                    self.received.insert(self.next, m.clone());
                    self.next += 1;
                    Ok(Some(m))
                }
                Err(BacapError::Tombstone) => Ok(None),
                Err(e) => Err(e.into()),
            },
            _ => Ok(None),
        }
    }

    /// Polls until a miss. Returns the messages gained.
    pub fn drain(&mut self, net: &mut PigeonholeNet) -> Result<Vec<ChannelMessage>, PigeonholeError> {
        let mut out = Vec::new();
        while let Some(m) = self.poll(net)? {
            out.push(m);
        }
        Ok(out)
    }
}
