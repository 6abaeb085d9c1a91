//! Courier state machine.
//!
//! The courier never holds a long-term box ID: write and read envelopes are
//! opaque apart from replica ids, and copy commands expose only the
//! temporary channel. Responses are cached per envelope digest so a resent
//! envelope reaches the replica at most once while its cache entry lives.
//!
//! A copy command runs in phases:
//! 1. read temporary boxes until the entry flagged last;
//! 2. stage every entry at its intermediate replicas (bounded retries);
//!    any entry that cannot be staged aborts the whole copy;
//! 3. commit at every replica that staged (retried until acknowledged);
//! 4. tombstone the temporary boxes;
//! 5. report the number of copied entries.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::RngCore;

use crate::bacap::{make_tombstone, open as bacap_open, Capability, Context, WriteCap};
use crate::crypto::kdf::hash256;

use super::envelope::{open_reply, seal_envelope, EnvelopeSecrets, ReadResult, ReplicaCommand};
use super::net::{Addr, Msg, Out, Timer};
use super::replica::{ReplicaResponse, ReplicaRpc};
use super::{CourierId, Envelope, PigeonholeConfig, PigeonholeError, ReplicaId, ShardMap, SimTime, SurbHandle};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CourierRequest {
    Write { envelope: Envelope, surb: SurbHandle },
    Read { envelope: Envelope, surb: SurbHandle },
    Copy { temp_write_cap: Vec<u8>, context: Context, surb: SurbHandle },
}

impl CourierRequest {
    pub fn surb(&self) -> SurbHandle {
        match self {
            CourierRequest::Write { surb, .. } | CourierRequest::Read { surb, .. } | CourierRequest::Copy { surb, .. } => {
                *surb
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CourierReply {
    WriteAck,
    ReadReply(Vec<u8>),
    CopyReport { ok: bool, items: u32 },
}

/// Entry of a temporary channel: a complete write envelope for the
/// long-term channel plus a last-entry flag.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TempEntry {
    pub last: bool,
    pub envelope: Envelope,
}

impl TempEntry {
    pub fn encode(&self, size: usize) -> Result<Vec<u8>, PigeonholeError> {
        let env = self.envelope.to_bytes();
        if 5 + env.len() > size {
            return Err(PigeonholeError::Malformed("temporary entry too large"));
        }
        let mut out = Vec::with_capacity(size);
        out.push(self.last as u8);
        out.extend_from_slice(&(env.len() as u32).to_be_bytes());
        out.extend(env);
        out.resize(size, 0);
        Ok(out)
    }

    pub fn decode(b: &[u8]) -> Result<Self, PigeonholeError> {
        if b.len() < 5 || b[0] > 1 {
            return Err(PigeonholeError::Malformed("temporary entry"));
        }
        let len = u32::from_be_bytes(b[1..5].try_into().expect("4")) as usize;
        let env = b.get(5..5 + len).ok_or(PigeonholeError::Malformed("temporary entry length"))?;
        Ok(TempEntry {
            last: b[0] == 1,
            envelope: Envelope::from_bytes(env)?,
        })
    }
}

/// Immutable view of the deployment a courier acts in.
pub struct CourierCtx<'a> {
    pub cfg: &'a PigeonholeConfig,
    pub shards: &'a ShardMap,
    pub now: SimTime,
    /// Replica public keys for the current epoch, indexed by replica id.
    pub replica_keys: &'a HashMap<ReplicaId, Vec<u8>>,
}

impl CourierCtx<'_> {
    fn epoch(&self) -> u64 {
        self.now / self.cfg.epoch_ms
    }
}

#[derive(Debug, Clone)]
enum EnvKind {
    Write { acked: bool },
    Read { response: Option<Vec<u8>> },
}

#[derive(Debug, Clone)]
struct EnvState {
    kind: EnvKind,
    envelope: Envelope,
    waiting: Vec<SurbHandle>,
    last_forward: SimTime,
    expires: SimTime,
}

#[derive(Debug, Clone)]
enum RpcKind {
    Envelope([u8; 32]),
    CopyRead { copy_id: u64, secrets: EnvelopeSecrets, replica_public: Vec<u8> },
    Stage { copy_id: u64, entry: usize },
    Commit { copy_id: u64 },
    Abort { copy_id: u64 },
    Tombstone { copy_id: u64, offset: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Reading,
    Staging,
    Committing,
    Tombstoning,
    Aborting,
    Done,
}

struct CopyJob {
    temp: WriteCap,
    ctx: Context,
    surbs: Vec<SurbHandle>,
    phase: Phase,
    entries: Vec<Envelope>,
    read_attempts: u32,
    read_in_flight: Option<u64>,
    staged: Vec<bool>,
    stage_attempts: Vec<u32>,
    stagers: BTreeSet<ReplicaId>,
    contacted: BTreeSet<ReplicaId>,
    commit_pending: BTreeSet<ReplicaId>,
    abort_pending: BTreeSet<ReplicaId>,
    abort_attempts: u32,
    tomb_pending: BTreeSet<u64>,
    result: Option<(bool, u32)>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CourierStats {
    pub requests: u64,
    pub replica_rpcs: u64,
    pub cache_hits: u64,
    pub copies_ok: u64,
    pub copies_failed: u64,
}

pub struct Courier {
    pub id: CourierId,
    cache: HashMap<[u8; 32], EnvState>,
    rpcs: HashMap<u64, (ReplicaId, RpcKind)>,
    next_rpc: u64,
    copies: BTreeMap<u64, CopyJob>,
    copy_by_request: HashMap<[u8; 32], u64>,
    next_copy: u64,
    /// Every byte string this courier received, kept when tracing.
    pub trace: Option<Vec<Vec<u8>>>,
    pub stats: CourierStats,
}

impl Courier {
    pub fn new(id: CourierId, tracing: bool) -> Self {
        Courier {
            id,
            cache: HashMap::new(),
            rpcs: HashMap::new(),
            next_rpc: 0,
            copies: BTreeMap::new(),
            copy_by_request: HashMap::new(),
            next_copy: 0,
            trace: tracing.then(Vec::new),
            stats: CourierStats::default(),
        }
    }

    /// Box IDs this courier can name: those of temporary channels it was
    /// given write capabilities for.
    pub fn known_box_ids(&self) -> Vec<[u8; 32]> {
        let mut ids = Vec::new();
        for job in self.copies.values() {
            for k in job.temp.cursor(job.ctx).take(job.entries.len().max(1)) {
                ids.push(k.box_id.to_bytes());
            }
        }
        ids
    }

    pub fn active_copies(&self) -> usize {
        self.copies.values().filter(|j| j.phase != Phase::Done).count()
    }

    fn record(&mut self, bytes: Vec<u8>) {
        if let Some(t) = &mut self.trace {
            t.push(bytes);
        }
    }

    fn rpc(&mut self, to: ReplicaId, kind: RpcKind, rpc: ReplicaRpc, cfg: &PigeonholeConfig, out: &mut Vec<Out>) -> u64 {
        let req_id = self.next_rpc;
        self.next_rpc += 1;
        self.rpcs.insert(req_id, (to, kind));
        self.stats.replica_rpcs += 1;
        out.push(Out::send(
            Addr::Replica(to),
            Msg::CourierRpc {
                courier: self.id,
                req_id,
                rpc,
            },
        ));
        out.push(Out::timer(cfg.rpc_timeout_ms, Timer::CourierRpcTimeout(req_id)));
        req_id
    }

    fn forward_envelope(&mut self, digest: [u8; 32], ctx: &CourierCtx, out: &mut Vec<Out>) {
        let Some(st) = self.cache.get_mut(&digest) else { return };
        st.last_forward = ctx.now;
        let env = st.envelope.clone();
        let is_write = matches!(st.kind, EnvKind::Write { .. });
        let targets = if is_write {
            env.replica_ids()
        } else {
            env.replica_ids().into_iter().take(1).collect()
        };
        for r in targets {
            let rpc = if is_write {
                ReplicaRpc::Write { envelope: env.clone() }
            } else {
                ReplicaRpc::Read { envelope: env.clone() }
            };
            self.rpc(r, RpcKind::Envelope(digest), rpc, ctx.cfg, out);
        }
    }

    pub fn handle_request(&mut self, req: CourierRequest, ctx: &CourierCtx, rng: &mut dyn RngCore) -> Vec<Out> {
        self.stats.requests += 1;
        let mut out = Vec::new();
        match req {
            CourierRequest::Write { envelope, surb } => {
                self.record(envelope.to_bytes());
                self.envelope_request(envelope, surb, true, ctx, &mut out);
            }
            CourierRequest::Read { envelope, surb } => {
                self.record(envelope.to_bytes());
                self.envelope_request(envelope, surb, false, ctx, &mut out);
            }
            CourierRequest::Copy {
                temp_write_cap,
                context,
                surb,
            } => {
                self.record(temp_write_cap.clone());
                let key = hash256(b"pigeonhole/copy", &[&temp_write_cap, &context.0]);
                if let Some(id) = self.copy_by_request.get(&key) {
                    let job = self.copies.get_mut(id).expect("job");
                    match job.result {
                        Some((ok, items)) => out.push(Out::SurbReply {
                            surb,
                            reply: CourierReply::CopyReport { ok, items },
                        }),
                        None => job.surbs.push(surb),
                    }
                    return out;
                }
                let Ok(temp) = WriteCap::from_bytes(&temp_write_cap) else { return out };
                let id = self.next_copy;
                self.next_copy += 1;
                self.copy_by_request.insert(key, id);
                self.copies.insert(
                    id,
                    CopyJob {
                        temp,
                        ctx: context,
                        surbs: vec![surb],
                        phase: Phase::Reading,
                        entries: Vec::new(),
                        read_attempts: 0,
                        read_in_flight: None,
                        staged: Vec::new(),
                        stage_attempts: Vec::new(),
                        stagers: BTreeSet::new(),
                        contacted: BTreeSet::new(),
                        commit_pending: BTreeSet::new(),
                        abort_pending: BTreeSet::new(),
                        abort_attempts: 0,
                        tomb_pending: BTreeSet::new(),
                        result: None,
                    },
                );
                self.copy_read_next(id, ctx, rng, &mut out);
            }
        }
        out
    }

    fn envelope_request(
        &mut self,
        envelope: Envelope,
        surb: SurbHandle,
        is_write: bool,
        ctx: &CourierCtx,
        out: &mut Vec<Out>,
    ) {
        let digest = envelope.digest();
        if let Some(st) = self.cache.get(&digest) {
            if st.expires < ctx.now {
                self.cache.remove(&digest);
            }
        }
        match self.cache.get_mut(&digest) {
            Some(st) => {
                let ready = match &st.kind {
                    EnvKind::Write { acked: true } => Some(CourierReply::WriteAck),
                    EnvKind::Read { response: Some(r) } => Some(CourierReply::ReadReply(r.clone())),
                    _ => None,
                };
                match ready {
                    Some(reply) => {
                        self.stats.cache_hits += 1;
                        out.push(Out::SurbReply { surb, reply });
                    }
                    None => {
                        st.waiting.push(surb);
                        // Re-forward only if the earlier attempt evidently never got through.
                        if ctx.now >= st.last_forward + ctx.cfg.rpc_timeout_ms {
                            self.forward_envelope(digest, ctx, out);
                        }
                    }
                }
            }
            None => {
                let kind = if is_write {
                    EnvKind::Write { acked: false }
                } else {
                    EnvKind::Read { response: None }
                };
                self.cache.insert(
                    digest,
                    EnvState {
                        kind,
                        envelope,
                        waiting: vec![surb],
                        last_forward: ctx.now,
                        expires: ctx.now + ctx.cfg.courier_cache_ttl_ms,
                    },
                );
                self.forward_envelope(digest, ctx, out);
            }
        }
    }

    pub fn handle(&mut self, msg: Msg, ctx: &CourierCtx, rng: &mut dyn RngCore) -> Vec<Out> {
        let mut out = Vec::new();
        match msg {
            Msg::Request { req } => return self.handle_request(req, ctx, rng),
            Msg::ReplicaResp { replica, req_id, resp } => {
                let Some((to, kind)) = self.rpcs.remove(&req_id) else { return out };
                if to != replica {
                    return out;
                }
                self.on_response(kind, replica, resp, ctx, rng, &mut out);
            }
            Msg::PendingReply { digest, reply, .. } => {
                self.record(reply.clone());
                if let Some(st) = self.cache.get_mut(&digest) {
                    if let EnvKind::Read { response } = &mut st.kind {
                        *response = Some(reply.clone());
                        st.expires = ctx.now + ctx.cfg.courier_cache_ttl_ms;
                        for s in st.waiting.drain(..) {
                            out.push(Out::SurbReply {
                                surb: s,
                                reply: CourierReply::ReadReply(reply.clone()),
                            });
                        }
                    }
                }
            }
            _ => {}
        }
        out
    }

    fn on_response(
        &mut self,
        kind: RpcKind,
        replica: ReplicaId,
        resp: ReplicaResponse,
        ctx: &CourierCtx,
        rng: &mut dyn RngCore,
        out: &mut Vec<Out>,
    ) {
        match (kind, resp) {
            (RpcKind::Envelope(digest), ReplicaResponse::WriteAck { ok: true }) => {
                if let Some(st) = self.cache.get_mut(&digest) {
                    st.kind = EnvKind::Write { acked: true };
                    for s in st.waiting.drain(..) {
                        out.push(Out::SurbReply {
                            surb: s,
                            reply: CourierReply::WriteAck,
                        });
                    }
                }
            }
            (RpcKind::Envelope(digest), ReplicaResponse::ReadReply { digest: d, reply }) if d == digest => {
                self.record(reply.clone());
                if let Some(st) = self.cache.get_mut(&digest) {
                    st.kind = EnvKind::Read {
                        response: Some(reply.clone()),
                    };
                    st.expires = ctx.now + ctx.cfg.courier_cache_ttl_ms;
                    for s in st.waiting.drain(..) {
                        out.push(Out::SurbReply {
                            surb: s,
                            reply: CourierReply::ReadReply(reply.clone()),
                        });
                    }
                }
            }
            (
                RpcKind::CopyRead {
                    copy_id,
                    secrets,
                    replica_public,
                },
                ReplicaResponse::ReadReply { reply, .. },
            ) => {
                self.record(reply.clone());
                let result = secrets.reply_key(&replica_public).and_then(|k| open_reply(&k, &reply));
                self.on_copy_read(copy_id, result, ctx, rng, out);
            }
            (RpcKind::Stage { copy_id, entry }, ReplicaResponse::StageAck { ok: true }) => {
                if let Some(job) = self.copies.get_mut(&copy_id) {
                    if job.phase == Phase::Staging {
                        job.staged[entry] = true;
                        job.stagers.insert(replica);
                        if job.staged.iter().all(|s| *s) {
                            job.phase = Phase::Committing;
                            job.commit_pending = job.stagers.clone();
                            self.copy_drive(copy_id, ctx, rng, out);
                        }
                    }
                }
            }
            (RpcKind::Commit { copy_id }, ReplicaResponse::CommitAck) => {
                if let Some(job) = self.copies.get_mut(&copy_id) {
                    job.commit_pending.remove(&replica);
                    if job.phase == Phase::Committing && job.commit_pending.is_empty() {
                        job.phase = Phase::Tombstoning;
                        job.tomb_pending = (0..job.entries.len() as u64).collect();
                        self.copy_drive(copy_id, ctx, rng, out);
                    }
                }
            }
            (RpcKind::Abort { copy_id }, ReplicaResponse::AbortAck) => {
                if let Some(job) = self.copies.get_mut(&copy_id) {
                    job.abort_pending.remove(&replica);
                    if job.phase == Phase::Aborting && job.abort_pending.is_empty() {
                        job.phase = Phase::Done;
                    }
                }
            }
            (RpcKind::Tombstone { copy_id, offset }, ReplicaResponse::WriteAck { ok: true }) => {
                let mut finished = false;
                if let Some(job) = self.copies.get_mut(&copy_id) {
                    job.tomb_pending.remove(&offset);
                    finished = job.phase == Phase::Tombstoning && job.tomb_pending.is_empty();
                }
                if finished {
                    self.finish_copy(copy_id, true, out);
                }
            }
            _ => {}
        }
    }

    fn finish_copy(&mut self, copy_id: u64, ok: bool, out: &mut Vec<Out>) {
        let Some(job) = self.copies.get_mut(&copy_id) else { return };
        let items = if ok { job.entries.len() as u32 } else { 0 };
        job.result = Some((ok, items));
        if ok {
            job.phase = Phase::Done;
            self.stats.copies_ok += 1;
        } else {
            self.stats.copies_failed += 1;
        }
        for s in job.surbs.drain(..) {
            out.push(Out::SurbReply {
                surb: s,
                reply: CourierReply::CopyReport { ok, items },
            });
        }
    }

    fn copy_read_next(&mut self, copy_id: u64, ctx: &CourierCtx, rng: &mut dyn RngCore, out: &mut Vec<Out>) {
        let Some(job) = self.copies.get(&copy_id) else { return };
        let offset = job.entries.len() as u64;
        let keys = match job.temp.box_keys_at(job.temp.index() + offset, &job.ctx) {
            Ok(k) => k,
            Err(_) => return self.abort_copy(copy_id, ctx, out),
        };
        let box_id = keys.box_id.to_bytes();
        let shard = ctx.shards.select(&box_id);
        let replica = shard[job.read_attempts as usize % shard.len()];
        let Some(pk) = ctx.replica_keys.get(&replica).cloned() else { return };
        let cmd = ReplicaCommand::Read { box_id };
        let Ok((envelope, secrets)) = seal_envelope(ctx.epoch(), &[(replica, &pk)], &cmd, rng) else { return };
        let req = self.rpc(
            replica,
            RpcKind::CopyRead {
                copy_id,
                secrets,
                replica_public: pk,
            },
            ReplicaRpc::Read { envelope },
            ctx.cfg,
            out,
        );
        if let Some(job) = self.copies.get_mut(&copy_id) {
            job.read_in_flight = Some(req);
        }
    }

    fn on_copy_read(
        &mut self,
        copy_id: u64,
        result: Result<ReadResult, PigeonholeError>,
        ctx: &CourierCtx,
        rng: &mut dyn RngCore,
        out: &mut Vec<Out>,
    ) {
        let Some(job) = self.copies.get_mut(&copy_id) else { return };
        if job.phase != Phase::Reading {
            return;
        }
        job.read_in_flight = None;
        let offset = job.entries.len() as u64;
        let entry = match result {
            Ok(ReadResult::Found(b)) => job
                .temp
                .box_keys_at(job.temp.index() + offset, &job.ctx)
                .ok()
                .and_then(|k| bacap_open(&k, &b).ok())
                .and_then(|pt| TempEntry::decode(&pt).ok()),
            _ => None,
        };
        match entry {
            Some(e) => {
                job.read_attempts = 0;
                let last = e.last;
                job.entries.push(e.envelope);
                if last {
                    let n = job.entries.len();
                    job.phase = Phase::Staging;
                    job.staged = vec![false; n];
                    job.stage_attempts = vec![0; n];
                    self.copy_drive(copy_id, ctx, rng, out);
                } else {
                    self.copy_read_next(copy_id, ctx, rng, out);
                }
            }
            None => self.copy_read_retry(copy_id, ctx, out),
        }
    }

    fn copy_read_retry(&mut self, copy_id: u64, ctx: &CourierCtx, out: &mut Vec<Out>) {
        let Some(job) = self.copies.get_mut(&copy_id) else { return };
        job.read_attempts += 1;
        if job.read_attempts >= ctx.cfg.copy_read_max_attempts {
            self.abort_copy(copy_id, ctx, out);
        } else {
            out.push(Out::timer(ctx.cfg.rpc_timeout_ms, Timer::CopyTick(copy_id)));
        }
    }

    fn abort_copy(&mut self, copy_id: u64, ctx: &CourierCtx, out: &mut Vec<Out>) {
        if let Some(job) = self.copies.get_mut(&copy_id) {
            job.phase = Phase::Aborting;
            job.abort_pending = job.contacted.clone();
            job.abort_attempts = 0;
        }
        self.finish_copy(copy_id, false, out);
        let contacted = self.copies.get(&copy_id).map(|j| j.abort_pending.clone()).unwrap_or_default();
        if contacted.is_empty() {
            if let Some(job) = self.copies.get_mut(&copy_id) {
                job.phase = Phase::Done;
            }
            return;
        }
        for r in contacted {
            self.rpc(r, RpcKind::Abort { copy_id }, ReplicaRpc::Abort { copy_id }, ctx.cfg, out);
        }
        out.push(Out::timer(ctx.cfg.rpc_timeout_ms, Timer::CopyTick(copy_id)));
    }

    /// Sends the current phase's outstanding requests and re-arms the tick.
    fn copy_drive(&mut self, copy_id: u64, ctx: &CourierCtx, rng: &mut dyn RngCore, out: &mut Vec<Out>) {
        let Some(job) = self.copies.get_mut(&copy_id) else { return };
        match job.phase {
            Phase::Reading => {
                if job.read_in_flight.is_none() {
                    self.copy_read_next(copy_id, ctx, rng, out);
                }
                return;
            }
            Phase::Staging => {
                let mut sends = Vec::new();
                for (j, env) in job.entries.iter().enumerate() {
                    if job.staged[j] {
                        continue;
                    }
                    if job.stage_attempts[j] >= ctx.cfg.stage_max_attempts {
                        return self.abort_copy(copy_id, ctx, out);
                    }
                    job.stage_attempts[j] += 1;
                    for r in env.replica_ids() {
                        job.contacted.insert(r);
                        sends.push((r, j, env.clone()));
                    }
                }
                for (r, j, env) in sends {
                    self.rpc(
                        r,
                        RpcKind::Stage { copy_id, entry: j },
                        ReplicaRpc::Stage { copy_id, envelope: env },
                        ctx.cfg,
                        out,
                    );
                }
            }
            Phase::Committing => {
                for r in job.commit_pending.clone() {
                    self.rpc(r, RpcKind::Commit { copy_id }, ReplicaRpc::Commit { copy_id }, ctx.cfg, out);
                }
            }
            Phase::Tombstoning => {
                let temp = job.temp.clone();
                let tctx = job.ctx;
                let pending: Vec<u64> = job.tomb_pending.iter().copied().collect();
                for offset in pending {
                    let Ok(keys) = temp.box_keys_at(temp.index() + offset, &tctx) else { continue };
                    let Ok(tomb) = make_tombstone(&keys, &temp) else { continue };
                    let mut ids: Vec<ReplicaId> = ctx.shards.replicas().iter().map(|d| d.id).collect();
                    ids.shuffle(rng);
                    ids.truncate(ctx.cfg.intermediate_replicas);
                    let recips: Vec<(ReplicaId, &[u8])> = ids
                        .iter()
                        .filter_map(|r| ctx.replica_keys.get(r).map(|k| (*r, k.as_slice())))
                        .collect();
                    let Ok((envelope, _)) = seal_envelope(ctx.epoch(), &recips, &ReplicaCommand::Write(tomb), rng) else {
                        continue;
                    };
                    for r in envelope.replica_ids() {
                        self.rpc(
                            r,
                            RpcKind::Tombstone { copy_id, offset },
                            ReplicaRpc::Write {
                                envelope: envelope.clone(),
                            },
                            ctx.cfg,
                            out,
                        );
                    }
                }
            }
            Phase::Aborting => {
                job.abort_attempts += 1;
                if job.abort_attempts > ctx.cfg.stage_max_attempts {
                    job.phase = Phase::Done;
                    return;
                }
                for r in job.abort_pending.clone() {
                    self.rpc(r, RpcKind::Abort { copy_id }, ReplicaRpc::Abort { copy_id }, ctx.cfg, out);
                }
            }
            Phase::Done => return,
        }
        out.push(Out::timer(ctx.cfg.rpc_timeout_ms, Timer::CopyTick(copy_id)));
    }

    pub fn on_timer(&mut self, timer: Timer, ctx: &CourierCtx, rng: &mut dyn RngCore) -> Vec<Out> {
        let mut out = Vec::new();
        match timer {
            Timer::CourierRpcTimeout(req_id) => {
                if let Some((_, RpcKind::CopyRead { copy_id, .. })) = self.rpcs.get(&req_id) {
                    let copy_id = *copy_id;
                    self.rpcs.remove(&req_id);
                    let in_flight = self.copies.get(&copy_id).and_then(|j| j.read_in_flight);
                    if in_flight == Some(req_id) {
                        if let Some(j) = self.copies.get_mut(&copy_id) {
                            j.read_in_flight = None;
                        }
                        self.copy_read_retry(copy_id, ctx, &mut out);
                    }
                } else {
                    self.rpcs.remove(&req_id);
                }
            }
            Timer::CopyTick(copy_id) => {
                let phase = self.copies.get(&copy_id).map(|j| j.phase);
                if phase == Some(Phase::Reading) {
                    let idle = self.copies.get(&copy_id).map(|j| j.read_in_flight.is_none()).unwrap_or(false);
                    if idle {
                        self.copy_read_next(copy_id, ctx, rng, &mut out);
                    }
                } else {
                    self.copy_drive(copy_id, ctx, rng, &mut out);
                }
            }
            _ => {}
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pigeonhole::envelope::EpochKeySchedule;

    #[test]
    fn temp_entry_round_trip() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(1);
        let k = EpochKeySchedule::new([1; 32]).keypair(0);
        let (envelope, _) = seal_envelope(0, &[(ReplicaId(1), &k.public)], &ReplicaCommand::Read { box_id: [2; 32] }, &mut rng).unwrap();
        let e = TempEntry { last: true, envelope };
        let enc = e.encode(600).unwrap();
        assert_eq!(enc.len(), 600);
        assert_eq!(TempEntry::decode(&enc).unwrap(), e);
        assert!(e.encode(10).is_err());
        assert!(TempEntry::decode(&[2, 0, 0, 0, 0]).is_err());
    }
}
