//! Replica state machine.
//!
//! Intermediate role: open a write envelope, persist the box in the durable
//! outbox, ack to the courier, then replicate to the final replicas until
//! each acknowledges. Final role: store into the current week's bucket and
//! wake pending readers. Staged boxes from copy commands sit apart until
//! committed or aborted.

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, RngCore};

use crate::bacap::BacapBox;

use super::envelope::{open_envelope, seal_reply, EpochKeySchedule, ReadResult, ReplicaCommand};
use super::net::{Addr, Msg, Out, Timer};
use super::store::ReplicaStore;
use super::{CourierId, Envelope, PigeonholeConfig, PigeonholeError, ReplicaId, ShardMap, SimTime};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReplicaRpc {
    Write { envelope: Envelope },
    Read { envelope: Envelope },
    Stage { copy_id: u64, envelope: Envelope },
    Commit { copy_id: u64 },
    Abort { copy_id: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReplicaResponse {
    WriteAck { ok: bool },
    ReadReply { digest: [u8; 32], reply: Vec<u8> },
    StageAck { ok: bool },
    CommitAck,
    AbortAck,
}

#[derive(Debug, Clone)]
struct PendingRead {
    courier: CourierId,
    digest: [u8; 32],
    reply_key: [u8; 32],
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReplicaStats {
    pub rpcs_received: u64,
    pub reads_received: u64,
    pub writes_received: u64,
    pub pending_fired: u64,
    pub rejected: u64,
}

pub struct Replica {
    pub id: ReplicaId,
    keys: EpochKeySchedule,
    pub store: ReplicaStore,
    /// Boxes this replica has taken responsibility for, with the final
    /// replicas that have not yet acknowledged.
    outbox: BTreeMap<[u8; 32], (BacapBox, Vec<ReplicaId>)>,
    staged: HashMap<(CourierId, u64), Vec<BacapBox>>,
    pending: HashMap<[u8; 32], Vec<PendingRead>>,
    scheduled: HashMap<u64, (CourierId, [u8; 32], Vec<u8>)>,
    next_token: u64,
    retry_armed: bool,
    pub stats: ReplicaStats,
}

impl Replica {
    pub fn new(id: ReplicaId, keys: EpochKeySchedule, store: ReplicaStore) -> Self {
        Replica {
            id,
            keys,
            store,
            outbox: BTreeMap::new(),
            staged: HashMap::new(),
            pending: HashMap::new(),
            scheduled: HashMap::new(),
            next_token: 0,
            retry_armed: false,
            stats: ReplicaStats::default(),
        }
    }

    pub fn epoch_public(&self, epoch: u64) -> Vec<u8> {
        self.keys.keypair(epoch).public
    }

    pub fn outbox_len(&self) -> usize {
        self.outbox.len()
    }

    pub fn staged_len(&self) -> usize {
        self.staged.values().map(Vec::len).sum()
    }

    pub fn pending_listeners(&self) -> usize {
        self.pending.values().map(Vec::len).sum()
    }

    fn open(
        &self,
        env: &Envelope,
        epoch: u64,
        cfg: &PigeonholeConfig,
    ) -> Result<(ReplicaCommand, [u8; 32]), PigeonholeError> {
        if env.epoch > epoch || env.epoch + cfg.epoch_key_window <= epoch {
            return Err(PigeonholeError::StaleEpoch(env.epoch));
        }
        open_envelope(env, self.id, &self.keys.keypair(env.epoch))
    }

    fn open_write(&self, env: &Envelope, epoch: u64, cfg: &PigeonholeConfig) -> Option<BacapBox> {
        match self.open(env, epoch, cfg) {
            Ok((ReplicaCommand::Write(b), _)) if crate::bacap::verify(&b) => Some(b),
            _ => None,
        }
    }

    fn take_responsibility(
        &mut self,
        b: BacapBox,
        shards: &ShardMap,
        cfg: &PigeonholeConfig,
        rng: &mut dyn RngCore,
        out: &mut Vec<Out>,
    ) {
        let id = b.box_id.to_bytes();
        if self.outbox.contains_key(&id) {
            return;
        }
        let finals = shards.select(&id);
        let mut remaining = Vec::new();
        for f in finals {
            if f == self.id {
                self.store_final(&b, cfg, rng, out);
            } else {
                remaining.push(f);
                out.push(Out::send(Addr::Replica(f), Msg::Replicate { from: self.id, boxed: b.clone() }));
            }
        }
        if !remaining.is_empty() {
            self.outbox.insert(id, (b, remaining));
            self.arm_retry(out);
        }
    }

    fn arm_retry(&mut self, out: &mut Vec<Out>) {
        if !self.retry_armed {
            self.retry_armed = true;
            out.push(Out::timer(0, Timer::ReplicaOutboxRetry));
        }
    }

    fn store_final(&mut self, b: &BacapBox, cfg: &PigeonholeConfig, rng: &mut dyn RngCore, out: &mut Vec<Out>) {
        match self.store.put(b) {
            Ok(o) if o.accepted() => {}
            _ => self.stats.rejected += 1,
        }
        let id = b.box_id.to_bytes();
        if let Some(listeners) = self.pending.remove(&id) {
            let stored = self.store.get(&id).and_then(|r| r.to_box().ok());
            if let Some(found) = stored {
                for l in listeners {
                    let result = ReadResult::Found(found.clone());
                    if let Ok(reply) = seal_reply(&l.reply_key, &result, cfg.max_box_len(), rng) {
                        let timer = self.schedule_pending(l.courier, l.digest, reply, cfg, rng);
                        out.push(timer);
                    }
                }
            }
        }
    }

    fn schedule_pending(
        &mut self,
        courier: CourierId,
        digest: [u8; 32],
        reply: Vec<u8>,
        cfg: &PigeonholeConfig,
        rng: &mut dyn RngCore,
    ) -> Out {
        let (lo, hi) = cfg.pending_read_delay_ms;
        let delay = rng.gen_range(lo..=hi);
        let token = self.next_token;
        self.next_token += 1;
        self.scheduled.insert(token, (courier, digest, reply));
        Out::timer(delay, Timer::ReplicaPendingFire(token))
    }

    pub fn handle(
        &mut self,
        msg: Msg,
        now: SimTime,
        cfg: &PigeonholeConfig,
        shards: &ShardMap,
        rng: &mut dyn RngCore,
    ) -> Vec<Out> {
        let epoch = now / cfg.epoch_ms;
        let mut out = Vec::new();
        match msg {
            Msg::CourierRpc { courier, req_id, rpc } => {
                self.stats.rpcs_received += 1;
                let resp = match rpc {
                    ReplicaRpc::Write { envelope } => {
                        self.stats.writes_received += 1;
                        match self.open_write(&envelope, epoch, cfg) {
                            Some(b) => {
                                self.take_responsibility(b, shards, cfg, rng, &mut out);
                                ReplicaResponse::WriteAck { ok: true }
                            }
                            None => ReplicaResponse::WriteAck { ok: false },
                        }
                    }
                    ReplicaRpc::Read { envelope } => {
                        self.stats.reads_received += 1;
                        let digest = envelope.digest();
                        match self.open(&envelope, epoch, cfg) {
                            Ok((ReplicaCommand::Read { box_id }, reply_key)) => {
                                let result = match self.store.get(&box_id).and_then(|r| r.to_box().ok()) {
                                    Some(b) => ReadResult::Found(b),
                                    None => {
                                        let l = self.pending.entry(box_id).or_default();
                                        if !l.iter().any(|p| p.digest == digest) {
                                            l.push(PendingRead {
                                                courier,
                                                digest,
                                                reply_key,
                                            });
                                        }
                                        ReadResult::NotFound
                                    }
                                };
                                match seal_reply(&reply_key, &result, cfg.max_box_len(), rng) {
                                    Ok(reply) => ReplicaResponse::ReadReply { digest, reply },
                                    Err(_) => return out,
                                }
                            }
                            _ => return out,
                        }
                    }
                    ReplicaRpc::Stage { copy_id, envelope } => match self.open_write(&envelope, epoch, cfg) {
                        Some(b) => {
                            let staged = self.staged.entry((courier, copy_id)).or_default();
                            if !staged.contains(&b) {
                                staged.push(b);
                            }
                            ReplicaResponse::StageAck { ok: true }
                        }
                        None => ReplicaResponse::StageAck { ok: false },
                    },
                    ReplicaRpc::Commit { copy_id } => {
                        if let Some(boxes) = self.staged.remove(&(courier, copy_id)) {
                            for b in boxes {
                                self.take_responsibility(b, shards, cfg, rng, &mut out);
                            }
                        }
                        ReplicaResponse::CommitAck
                    }
                    ReplicaRpc::Abort { copy_id } => {
                        self.staged.remove(&(courier, copy_id));
                        ReplicaResponse::AbortAck
                    }
                };
                out.push(Out::send(
                    Addr::Courier(courier),
                    Msg::ReplicaResp {
                        replica: self.id,
                        req_id,
                        resp,
                    },
                ));
            }
            Msg::Replicate { from, boxed } => {
                self.store_final(&boxed, cfg, rng, &mut out);
                out.push(Out::send(
                    Addr::Replica(from),
                    Msg::ReplicateAck {
                        from: self.id,
                        box_id: boxed.box_id.to_bytes(),
                    },
                ));
            }
            Msg::ReplicateAck { from, box_id } => {
                if let Some((_, remaining)) = self.outbox.get_mut(&box_id) {
                    remaining.retain(|r| *r != from);
                    if remaining.is_empty() {
                        self.outbox.remove(&box_id);
                    }
                }
            }
            _ => {}
        }
        out
    }

    pub fn on_timer(&mut self, timer: Timer, cfg: &PigeonholeConfig) -> Vec<Out> {
        let mut out = Vec::new();
        match timer {
            Timer::ReplicaOutboxRetry => {
                self.retry_armed = false;
                if !self.outbox.is_empty() {
                    for (b, remaining) in self.outbox.values() {
                        for f in remaining {
                            out.push(Out::send(
                                Addr::Replica(*f),
                                Msg::Replicate {
                                    from: self.id,
                                    boxed: b.clone(),
                                },
                            ));
                        }
                    }
                    self.retry_armed = true;
                    out.push(Out::timer(cfg.rpc_timeout_ms, Timer::ReplicaOutboxRetry));
                }
            }
            Timer::ReplicaPendingFire(token) => {
                if let Some((courier, digest, reply)) = self.scheduled.remove(&token) {
                    self.stats.pending_fired += 1;
                    out.push(Out::send(
                        Addr::Courier(courier),
                        Msg::PendingReply {
                            replica: self.id,
                            digest,
                            reply,
                        },
                    ));
                }
            }
            _ => {}
        }
        out
    }

    /// Enters a new storage week. Returns the records discarded.
    pub fn rotate_week(&mut self, week: u64) -> Result<usize, PigeonholeError> {
        self.store.rotate(week)
    }
}
