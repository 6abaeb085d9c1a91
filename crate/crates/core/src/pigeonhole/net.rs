//! Deterministic discrete-event harness for replicas, couriers and clients.
//!
//! One seeded RNG drives every latency, drop and key choice, so a
//! `(config, seed, fault plan)` triple replays identically. A node inside an
//! outage loses incoming messages; its timers are deferred to the end of the
//! outage, which models a crash with durable state.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, HashSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::bacap::{BacapBox, Context};

use super::courier::{Courier, CourierCtx, CourierReply, CourierRequest};
use super::envelope::{open_reply, seal_envelope, EnvelopeSecrets, EpochKeySchedule, ReadResult, ReplicaCommand};
use super::replica::{Replica, ReplicaResponse, ReplicaRpc};
use super::shard::{ReplicaDescriptor, ShardMap};
use super::store::ReplicaStore;
use super::{CourierId, Envelope, PigeonholeConfig, PigeonholeError, ReplicaId, SimTime, SurbHandle};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Addr {
    Replica(ReplicaId),
    Courier(CourierId),
    Client,
}

#[derive(Debug, Clone)]
pub enum Msg {
    Request {
        req: CourierRequest,
    },
    CourierRpc {
        courier: CourierId,
        req_id: u64,
        rpc: ReplicaRpc,
    },
    ReplicaResp {
        replica: ReplicaId,
        req_id: u64,
        resp: ReplicaResponse,
    },
    Replicate {
        from: ReplicaId,
        boxed: BacapBox,
    },
    ReplicateAck {
        from: ReplicaId,
        box_id: [u8; 32],
    },
    PendingReply {
        replica: ReplicaId,
        digest: [u8; 32],
        reply: Vec<u8>,
    },
    Reply {
        surb: SurbHandle,
        reply: CourierReply,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Timer {
    ReplicaOutboxRetry,
    ReplicaPendingFire(u64),
    CourierRpcTimeout(u64),
    CopyTick(u64),
    ClientRetry(u64),
}

/// Effect requested by an actor.
#[derive(Debug, Clone)]
pub enum Out {
    Send { to: Addr, msg: Msg },
    Timer { delay: SimTime, timer: Timer },
    SurbReply { surb: SurbHandle, reply: CourierReply },
}

impl Out {
    pub fn send(to: Addr, msg: Msg) -> Out {
        Out::Send { to, msg }
    }

    pub fn timer(delay: SimTime, timer: Timer) -> Out {
        Out::Timer { delay, timer }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Outage {
    pub addr: Addr,
    pub start: SimTime,
    pub end: SimTime,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FaultPlan {
    pub outages: Vec<Outage>,
    /// Drop probability on courier-replica and replica-replica links.
    pub link_drop_prob: f64,
    /// Drop probability on the client-courier mixnet leg.
    pub mix_drop_prob: f64,
}

impl FaultPlan {
    /// End of the outage covering `addr` at `t`, if any.
    pub fn down_until(&self, addr: Addr, t: SimTime) -> Option<SimTime> {
        self.outages
            .iter()
            .filter(|o| o.addr == addr && o.start <= t && t < o.end)
            .map(|o| o.end)
            .max()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OpResult {
    WriteAcked,
    Read(ReadResult),
    Copy { ok: bool, items: u32 },
    Failed,
}

/// A read envelope with the secrets needed to open its reply; resubmitting
/// the same request exercises courier deduplication.
#[derive(Debug, Clone)]
pub struct ReadRequest {
    pub envelope: Envelope,
    pub replica: ReplicaId,
    secrets: EnvelopeSecrets,
    replica_public: Vec<u8>,
}

#[derive(Debug, Clone)]
enum OpKind {
    Write(Envelope),
    Read(ReadRequest),
    Copy { cap: Vec<u8>, ctx: Context },
}

#[derive(Debug)]
struct ClientOp {
    kind: OpKind,
    courier: CourierId,
    attempts: u32,
    result: Option<OpResult>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NetStats {
    pub delivered: u64,
    pub dropped_link: u64,
    pub dropped_mix: u64,
    pub dropped_down: u64,
    pub surb_reuse_rejected: u64,
    pub client_sends: u64,
}

#[derive(Debug)]
enum Event {
    Deliver { to: Addr, msg: Msg },
    Timer { owner: Addr, timer: Timer },
}

const EVENT_BUDGET: u64 = 50_000_000;

pub struct PigeonholeNet {
    pub cfg: PigeonholeConfig,
    shards: ShardMap,
    pub replicas: Vec<Replica>,
    pub couriers: Vec<Courier>,
    pub faults: FaultPlan,
    pub stats: NetStats,
    now: SimTime,
    week: u64,
    heap: BinaryHeap<Reverse<(SimTime, u64)>>,
    events: HashMap<u64, Event>,
    seq: u64,
    rng: ChaCha20Rng,
    surbs: HashMap<u64, u64>,
    used_surbs: HashSet<u64>,
    next_surb: u64,
    ops: HashMap<u64, ClientOp>,
    next_op: u64,
    key_epoch: Option<u64>,
    keys: HashMap<ReplicaId, Vec<u8>>,
}

impl PigeonholeNet {
    pub fn new(cfg: PigeonholeConfig, seed: u64) -> Result<Self, PigeonholeError> {
        Self::build(cfg, seed, None)
    }

    /// Like [`PigeonholeNet::new`] with each replica's store logged under `dir`.
    pub fn persistent(cfg: PigeonholeConfig, seed: u64, dir: &Path) -> Result<Self, PigeonholeError> {
        Self::build(cfg, seed, Some(dir))
    }

    fn build(cfg: PigeonholeConfig, seed: u64, dir: Option<&Path>) -> Result<Self, PigeonholeError> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut descriptors = Vec::with_capacity(cfg.replicas);
        let mut replicas = Vec::with_capacity(cfg.replicas);
        for i in 0..cfg.replicas {
            let id = ReplicaId(i as u16);
            let mut identity_key = [0u8; 32];
            rng.fill_bytes(&mut identity_key);
            let mut seed = [0u8; 32];
            rng.fill_bytes(&mut seed);
            descriptors.push(ReplicaDescriptor { id, identity_key });
            let store = match dir {
                Some(d) => ReplicaStore::open(&d.join(format!("replica-{i}")), 0, cfg.retention_weeks)?,
                None => ReplicaStore::in_memory(0, cfg.retention_weeks),
            };
            replicas.push(Replica::new(id, EpochKeySchedule::new(seed), store));
        }
        let shards = ShardMap::new(descriptors, cfg.k)?;
        if cfg.intermediate_replicas == 0 || cfg.intermediate_replicas > cfg.replicas || cfg.couriers == 0 {
            return Err(PigeonholeError::ReplicationFactor {
                k: cfg.intermediate_replicas,
                n: cfg.replicas,
            });
        }
        let couriers = (0..cfg.couriers).map(|i| Courier::new(CourierId(i as u16), false)).collect();
        Ok(PigeonholeNet {
            cfg,
            shards,
            replicas,
            couriers,
            faults: FaultPlan::default(),
            stats: NetStats::default(),
            now: 0,
            week: 0,
            heap: BinaryHeap::new(),
            events: HashMap::new(),
            seq: 0,
            rng,
            surbs: HashMap::new(),
            used_surbs: HashSet::new(),
            next_surb: 0,
            ops: HashMap::new(),
            next_op: 0,
            key_epoch: None,
            keys: HashMap::new(),
        })
    }

    /// Makes every courier record the bytes it receives.
    pub fn trace_couriers(&mut self) {
        for c in &mut self.couriers {
            c.trace = Some(Vec::new());
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn epoch(&self) -> u64 {
        self.now / self.cfg.epoch_ms
    }

    pub fn week(&self) -> u64 {
        self.week
    }

    pub fn shards(&self) -> &ShardMap {
        &self.shards
    }

    pub fn rng(&mut self) -> &mut ChaCha20Rng {
        &mut self.rng
    }

    /// Blinding context published for the current week.
    pub fn context(&self) -> Context {
        week_context(self.week)
    }

    pub fn replica_public(&mut self, id: ReplicaId) -> Vec<u8> {
        self.refresh_keys();
        self.keys[&id].clone()
    }

    fn refresh_keys(&mut self) {
        let epoch = self.epoch();
        if self.key_epoch != Some(epoch) {
            self.keys = self.replicas.iter().map(|r| (r.id, r.epoch_public(epoch))).collect();
            self.key_epoch = Some(epoch);
        }
    }

    /// Chooses intermediates uniformly, independent of the box.
    pub fn pick_intermediates(&mut self) -> Vec<ReplicaId> {
        let mut ids: Vec<ReplicaId> = self.replicas.iter().map(|r| r.id).collect();
        ids.shuffle(&mut self.rng);
        ids.truncate(self.cfg.intermediate_replicas);
        ids
    }

    pub fn seal_write_to(&mut self, b: &BacapBox, intermediates: &[ReplicaId]) -> Result<Envelope, PigeonholeError> {
        self.refresh_keys();
        let epoch = self.epoch();
        let recips: Vec<(ReplicaId, &[u8])> = intermediates.iter().map(|r| (*r, self.keys[r].as_slice())).collect();
        Ok(seal_envelope(epoch, &recips, &ReplicaCommand::Write(b.clone()), &mut self.rng)?.0)
    }

    pub fn seal_write(&mut self, b: &BacapBox) -> Result<Envelope, PigeonholeError> {
        let ids = self.pick_intermediates();
        self.seal_write_to(b, &ids)
    }

    /// Read envelope for one uniformly chosen shard replica of `box_id`.
    pub fn prepare_read(&mut self, box_id: &[u8; 32]) -> Result<ReadRequest, PigeonholeError> {
        let shard = self.shards.select(box_id);
        let replica = *shard.choose(&mut self.rng).expect("k >= 1");
        self.prepare_read_at(box_id, replica)
    }

    pub fn prepare_read_at(&mut self, box_id: &[u8; 32], replica: ReplicaId) -> Result<ReadRequest, PigeonholeError> {
        let replica_public = self.replica_public(replica);
        let epoch = self.epoch();
        let (envelope, secrets) = seal_envelope(
            epoch,
            &[(replica, &replica_public)],
            &ReplicaCommand::Read { box_id: *box_id },
            &mut self.rng,
        )?;
        Ok(ReadRequest {
            envelope,
            replica,
            secrets,
            replica_public,
        })
    }

    fn random_courier(&mut self) -> CourierId {
        CourierId(self.rng.gen_range(0..self.couriers.len()) as u16)
    }

    fn submit(&mut self, kind: OpKind, courier: Option<CourierId>) -> u64 {
        let courier = courier.unwrap_or_else(|| self.random_courier());
        let id = self.next_op;
        self.next_op += 1;
        self.ops.insert(
            id,
            ClientOp {
                kind,
                courier,
                attempts: 0,
                result: None,
            },
        );
        self.client_send(id);
        id
    }

    fn client_send(&mut self, op_id: u64) {
        let surb = SurbHandle(self.next_surb);
        self.next_surb += 1;
        self.surbs.insert(surb.0, op_id);
        let op = &self.ops[&op_id];
        let req = match &op.kind {
            OpKind::Write(envelope) => CourierRequest::Write {
                envelope: envelope.clone(),
                surb,
            },
            OpKind::Read(r) => CourierRequest::Read {
                envelope: r.envelope.clone(),
                surb,
            },
            OpKind::Copy { cap, ctx } => CourierRequest::Copy {
                temp_write_cap: cap.clone(),
                context: *ctx,
                surb,
            },
        };
        let to = Addr::Courier(op.courier);
        self.stats.client_sends += 1;
        let timeout = self.cfg.client_timeout_ms;
        self.apply(Addr::Client, vec![
            Out::send(to, Msg::Request { req }),
            Out::timer(timeout, Timer::ClientRetry(op_id)),
        ]);
    }

    fn wait(&mut self, op_id: u64) -> OpResult {
        let mut budget = EVENT_BUDGET;
        while self.ops[&op_id].result.is_none() {
            if budget == 0 || !self.step() {
                break;
            }
            budget -= 1;
        }
        self.ops.remove(&op_id).and_then(|o| o.result).unwrap_or(OpResult::Failed)
    }

    pub fn write_envelope(&mut self, envelope: Envelope) -> OpResult {
        let op = self.submit(OpKind::Write(envelope), None);
        self.wait(op)
    }

    pub fn write_envelope_via(&mut self, envelope: Envelope, courier: CourierId) -> OpResult {
        let op = self.submit(OpKind::Write(envelope), Some(courier));
        self.wait(op)
    }

    pub fn write(&mut self, b: &BacapBox) -> Result<OpResult, PigeonholeError> {
        let env = self.seal_write(b)?;
        Ok(self.write_envelope(env))
    }

    pub fn read(&mut self, box_id: &[u8; 32]) -> Result<OpResult, PigeonholeError> {
        let req = self.prepare_read(box_id)?;
        Ok(self.submit_read(&req, None))
    }

    pub fn submit_read(&mut self, req: &ReadRequest, courier: Option<CourierId>) -> OpResult {
        let op = self.submit(OpKind::Read(req.clone()), courier);
        self.wait(op)
    }

    pub fn copy(&mut self, temp_write_cap: Vec<u8>, ctx: Context) -> OpResult {
        let op = self.submit(OpKind::Copy { cap: temp_write_cap, ctx }, None);
        self.wait(op)
    }

    /// Processes events until the queue is empty.
    pub fn run_until_idle(&mut self) {
        let mut budget = EVENT_BUDGET;
        while budget > 0 && self.step() {
            budget -= 1;
        }
    }

    /// Processes every event due within the next `ms` and moves the clock.
    pub fn advance(&mut self, ms: SimTime) {
        let until = self.now + ms;
        while let Some(Reverse((t, _))) = self.heap.peek() {
            if *t > until {
                break;
            }
            self.step();
        }
        self.now = until;
    }

    /// Opens the next storage week on every replica. Returns records dropped.
    pub fn rotate_week(&mut self) -> Result<usize, PigeonholeError> {
        self.week += 1;
        let mut dropped = 0;
        for r in &mut self.replicas {
            dropped += r.rotate_week(self.week)?;
        }
        Ok(dropped)
    }

    pub fn pending_events(&self) -> usize {
        self.heap.len()
    }

    fn schedule(&mut self, at: SimTime, ev: Event) {
        let seq = self.seq;
        self.seq += 1;
        self.events.insert(seq, ev);
        self.heap.push(Reverse((at, seq)));
    }

    fn apply(&mut self, owner: Addr, outs: Vec<Out>) {
        for o in outs {
            match o {
                Out::Send { to, msg } => self.transmit(owner, to, msg),
                Out::Timer { delay, timer } => self.schedule(self.now + delay, Event::Timer { owner, timer }),
                Out::SurbReply { surb, reply } => self.transmit(owner, Addr::Client, Msg::Reply { surb, reply }),
            }
        }
    }

    fn transmit(&mut self, from: Addr, to: Addr, msg: Msg) {
        let mix = from == Addr::Client || to == Addr::Client;
        let (p, latency) = if mix {
            let (lo, hi) = self.cfg.mix_latency_ms;
            (self.faults.mix_drop_prob, self.rng.gen_range(lo..=hi))
        } else {
            (self.faults.link_drop_prob, self.cfg.link_latency_ms)
        };
        if p > 0.0 && self.rng.gen_bool(p.min(1.0)) {
            if mix {
                self.stats.dropped_mix += 1;
            } else {
                self.stats.dropped_link += 1;
            }
            return;
        }
        self.schedule(self.now + latency, Event::Deliver { to, msg });
    }

    /// Runs one event. Returns false when the queue is empty.
    fn step(&mut self) -> bool {
        let Some(Reverse((t, seq))) = self.heap.pop() else { return false };
        let ev = self.events.remove(&seq).expect("scheduled event");
        self.now = self.now.max(t);
        self.refresh_keys();
        match ev {
            Event::Deliver { to, msg } => {
                if let Some(_end) = self.faults.down_until(to, self.now) {
                    self.stats.dropped_down += 1;
                    return true;
                }
                self.stats.delivered += 1;
                let outs = match to {
                    Addr::Replica(r) => {
                        let now = self.now;
                        self.replicas[r.0 as usize].handle(msg, now, &self.cfg, &self.shards, &mut self.rng)
                    }
                    Addr::Courier(c) => {
                        let ctx = CourierCtx {
                            cfg: &self.cfg,
                            shards: &self.shards,
                            now: self.now,
                            replica_keys: &self.keys,
                        };
                        self.couriers[c.0 as usize].handle(msg, &ctx, &mut self.rng)
                    }
                    Addr::Client => {
                        self.client_receive(msg);
                        Vec::new()
                    }
                };
                self.apply(to, outs);
            }
            Event::Timer { owner, timer } => {
                if let Some(end) = self.faults.down_until(owner, self.now) {
                    self.schedule(end, Event::Timer { owner, timer });
                    return true;
                }
                let outs = match owner {
                    Addr::Replica(r) => self.replicas[r.0 as usize].on_timer(timer, &self.cfg),
                    Addr::Courier(c) => {
                        let ctx = CourierCtx {
                            cfg: &self.cfg,
                            shards: &self.shards,
                            now: self.now,
                            replica_keys: &self.keys,
                        };
                        self.couriers[c.0 as usize].on_timer(timer, &ctx, &mut self.rng)
                    }
                    Addr::Client => {
                        if let Timer::ClientRetry(op) = timer {
                            self.client_retry(op);
                        }
                        Vec::new()
                    }
                };
                self.apply(owner, outs);
            }
        }
        true
    }

    fn client_retry(&mut self, op_id: u64) {
        let n = self.couriers.len() as u16;
        let (max, rotate) = (self.cfg.client_max_attempts, self.cfg.courier_rotation_retries);
        let Some(op) = self.ops.get_mut(&op_id) else { return };
        if op.result.is_some() {
            return;
        }
        op.attempts += 1;
        if op.attempts >= max {
            op.result = Some(OpResult::Failed);
            return;
        }
        // A copy stays with its courier so the job is never run twice.
        if !matches!(op.kind, OpKind::Copy { .. }) && rotate > 0 && op.attempts % rotate == 0 {
            op.courier = CourierId((op.courier.0 + 1) % n);
        }
        self.client_send(op_id);
    }

    fn client_receive(&mut self, msg: Msg) {
        let Msg::Reply { surb, reply } = msg else { return };
        let Some(&op_id) = self.surbs.get(&surb.0) else { return };
        if !self.used_surbs.insert(surb.0) {
            self.stats.surb_reuse_rejected += 1;
            return;
        }
        let Some(op) = self.ops.get_mut(&op_id) else { return };
        if op.result.is_some() {
            return;
        }
        op.result = match (&op.kind, reply) {
            (OpKind::Write(_), CourierReply::WriteAck) => Some(OpResult::WriteAcked),
            (OpKind::Read(r), CourierReply::ReadReply(bytes)) => r
                .secrets
                .reply_key(&r.replica_public)
                .and_then(|k| open_reply(&k, &bytes))
                .ok()
                .map(OpResult::Read),
            (OpKind::Copy { .. }, CourierReply::CopyReport { ok, items }) => Some(OpResult::Copy { ok, items }),
            _ => None,
        };
    }

    /// Delivers a reply on a SURB handle directly, bypassing couriers.
    /// Returns false when the handle was already used or is unknown.
    pub fn inject_surb_reply(&mut self, surb: SurbHandle, reply: CourierReply) -> bool {
        let before = self.stats.surb_reuse_rejected;
        let known = self.surbs.contains_key(&surb.0);
        self.client_receive(Msg::Reply { surb, reply });
        known && self.stats.surb_reuse_rejected == before
    }

    /// Most recently issued SURB handle.
    pub fn last_surb(&self) -> Option<SurbHandle> {
        self.next_surb.checked_sub(1).map(SurbHandle)
    }
}

/// Context derived from the shared random value of `week`.
pub fn week_context(week: u64) -> Context {
    let mut v = b"pigeonhole/wsrv".to_vec();
    v.extend_from_slice(&week.to_be_bytes());
    Context::from_public_value(&v)
}
