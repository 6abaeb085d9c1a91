//! Event loop.
//!
//! Virtual time is integer nanoseconds. Every entity draws from its own
//! ChaCha stream keyed by `(seed, entity label)`, so adding an entity leaves
//! the others' randomness untouched and a run is a pure function of its
//! configuration.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, HashMap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Exp};
use serde::Serialize;

use super::config::{FaultSpec, Mode, ScenarioConfig};
use super::coupling::{bacap_destination, CouplingMux, Destination};
use super::dist::{coupon_bound, sample_hop_delay, CouponBound};
use super::topology::{NodeId, NodeKind, Step, Topology};
use super::MixsimError;
use crate::bacap::{generate_write_cap, BoxCursor, Capability, Context};
use crate::crypto::kdf::hash256;
use crate::crypto::catalog::SuiteKind;
use crate::sphinx::geometry;

pub const NS_PER_S: f64 = 1e9;

pub fn to_ns(s: f64) -> u64 {
    (s * NS_PER_S).round().max(0.0) as u64
}

pub fn to_s(ns: u64) -> f64 {
    ns as f64 / NS_PER_S
}

/// Per-entity random stream.
pub fn substream(seed: u64, label: &str) -> ChaCha20Rng {
    ChaCha20Rng::from_seed(hash256(b"mixsim/substream", &[&seed.to_be_bytes(), label.as_bytes()]))
}

/// Wire size used when a scenario does not set one.
pub fn default_packet_size() -> u32 {
    geometry("X25519", SuiteKind::Nike, 5, 2048)
        .map(|g| g.packet_size as u32)
        .expect("catalogued suite")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PacketKind {
    Echo,
    GatewayDecoy,
    Heartbeat,
    LoopixPayload,
    LoopixDrop,
    LoopixLoop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DropCause {
    LinkFault,
    NMinusOne,
    NodeDown,
    ClientOffline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LinkObservation {
    pub t_ns: u64,
    pub src: NodeId,
    pub dst: NodeId,
    pub size: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LatencyRecord {
    pub packet: u64,
    pub kind: PacketKind,
    pub app: bool,
    pub emitted_ns: u64,
    pub latency_ns: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinkRating {
    pub from: NodeId,
    pub to: NodeId,
    pub sent: u64,
    pub returned: u64,
    pub rating: f64,
}

/// Link ratings uploaded for one epoch.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRatings {
    pub epoch: u64,
    pub links: Vec<LinkRating>,
}

impl EpochRatings {
    pub fn rating(&self, from: NodeId, to: NodeId) -> Option<f64> {
        self.links.iter().find(|l| l.from == from && l.to == to).map(|l| l.rating)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Default)]
pub struct LatencySummary {
    pub count: u64,
    pub mean_s: f64,
    pub std_s: f64,
    pub max_s: f64,
    /// Fraction above twenty mean hop delays.
    pub frac_over_20mu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub schema_version: u32,
    pub name: String,
    pub mode: Mode,
    pub seed: u64,
    pub duration_s: f64,
    pub end_s: f64,
    pub emitted: BTreeMap<PacketKind, u64>,
    pub emitted_total: u64,
    pub delivered: u64,
    pub dropped: BTreeMap<DropCause, u64>,
    pub in_flight: u64,
    pub conserved: bool,
    pub echo_rtt: LatencySummary,
    pub observations: u64,
    pub packet_size: u32,
    pub wire_uniform: bool,
    pub coupon_bound: CouponBound,
    pub gateway_decoy_rate_per_s: f64,
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub config: ScenarioConfig,
    pub summary: Summary,
    pub observations: Vec<LinkObservation>,
    pub latencies: Vec<LatencyRecord>,
    pub pki_view: Vec<EpochRatings>,
    /// `probe_ranks[m][r]`: snapshots with `m` queued packets where the
    /// `r`-th oldest was released next.
    pub probe_ranks: Vec<Vec<u64>>,
    pub receiver_service: Option<NodeId>,
}

pub const PROBE_MAX_QUEUE: usize = 8;

#[derive(Debug, Clone, Copy)]
enum Ev {
    ClientEmit(u32),
    LoopEmit(u32),
    GatewayEmit(u32),
    HeartbeatEmit(usize),
    ConversationTick,
    Arrive(u64),
    Release(u64),
    HeartbeatTimeout(u64),
}

struct Item {
    t: u64,
    seq: u64,
    ev: Ev,
}

impl PartialEq for Item {
    fn eq(&self, o: &Self) -> bool {
        (self.t, self.seq) == (o.t, o.seq)
    }
}
impl Eq for Item {}
impl PartialOrd for Item {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Item {
    fn cmp(&self, o: &Self) -> Ordering {
        (o.t, o.seq).cmp(&(self.t, self.seq))
    }
}

struct Packet {
    kind: PacketKind,
    app: bool,
    route: Vec<Step>,
    pos: usize,
    emitted: u64,
}

#[derive(Default)]
struct NodeState {
    queue: Vec<(u64, u64, u64)>,
}

struct ClientState {
    rng: ChaCha20Rng,
    mux: CouplingMux,
    provider: NodeId,
    loopix_queue: VecDeque<u32>,
    offline: Vec<(u64, u64)>,
}

struct Conversation {
    cursor: BoxCursor,
    sender: u32,
    receiver: u32,
    interval: u64,
}

struct Fault {
    spec: FaultSpec,
    start: u64,
    end: u64,
}

struct Engine<'a> {
    cfg: &'a ScenarioConfig,
    topo: Topology,
    now: u64,
    duration: u64,
    seq: u64,
    heap: BinaryHeap<Item>,
    packets: HashMap<u64, Packet>,
    next_packet: u64,
    nodes: HashMap<NodeId, NodeState>,
    node_rngs: HashMap<NodeId, ChaCha20Rng>,
    hb_rngs: Vec<ChaCha20Rng>,
    hb_nodes: Vec<NodeId>,
    hb_pending: HashMap<u64, Vec<(NodeId, NodeId)>>,
    hb_tally: BTreeMap<(u64, NodeId, NodeId), (u64, u64)>,
    clients: Vec<ClientState>,
    gateway_rngs: Vec<ChaCha20Rng>,
    gateway_rate: f64,
    fault_rng: ChaCha20Rng,
    faults: Vec<Fault>,
    conversation: Option<Conversation>,
    client_emissions: u64,
    emitted: BTreeMap<PacketKind, u64>,
    delivered: u64,
    dropped: BTreeMap<DropCause, u64>,
    observations: Vec<LinkObservation>,
    latencies: Vec<LatencyRecord>,
    probe_ranks: Vec<Vec<u64>>,
    packet_size: u32,
    bound: CouponBound,
}

fn exp_gap(rate: f64, rng: &mut ChaCha20Rng) -> u64 {
    to_ns(Exp::new(rate).expect("positive rate").sample(rng))
}

impl<'a> Engine<'a> {
    fn new(cfg: &'a ScenarioConfig, seed: u64) -> Result<Self, MixsimError> {
        cfg.validate()?;
        let topo = cfg.topology;
        let bound = coupon_bound(topo.layer_width as u64, topo.gateways as u64, cfg.mix.lambda)?;
        let client_rate = cfg.clients.rate + cfg.clients.loop_rate;
        let gateway_rate = if cfg.gateway.topup && cfg.mode == Mode::Echomix {
            (bound.per_gateway_per_s - topo.clients as f64 * client_rate / topo.gateways as f64).max(0.0)
        } else {
            0.0
        };
        let strict = cfg.clients.strict_coupling;
        let clients = (0..topo.clients)
            .map(|i| ClientState {
                rng: substream(seed, &format!("client-{i}")),
                mux: CouplingMux::new(topo.services, cfg.clients.selection, strict),
                provider: NodeId::service(i % topo.services),
                loopix_queue: VecDeque::new(),
                offline: cfg
                    .churn
                    .iter()
                    .filter(|c| c.client == i)
                    .map(|c| (to_ns(c.start_s), to_ns(c.end_s)))
                    .collect(),
            })
            .collect();
        let hb_nodes = topo.network_nodes();
        let conversation = cfg.conversation.as_ref().map(|c| {
            let mut rng = substream(seed, "conversation");
            let cap = generate_write_cap(&mut rng);
            Conversation {
                cursor: cap.cursor(Context::from_public_value(b"mixsim/conversation")),
                sender: c.sender,
                receiver: c.receiver,
                interval: to_ns(c.interval_s),
            }
        });
        let faults = cfg
            .faults
            .iter()
            .map(|f| {
                let (s, e) = f.window();
                Fault {
                    spec: f.clone(),
                    start: to_ns(s),
                    end: if e.is_finite() { to_ns(e) } else { u64::MAX },
                }
            })
            .collect();
        Ok(Engine {
            cfg,
            topo,
            now: 0,
            duration: to_ns(cfg.duration_s),
            seq: 0,
            heap: BinaryHeap::new(),
            packets: HashMap::new(),
            next_packet: 0,
            nodes: hb_nodes.iter().map(|n| (*n, NodeState::default())).collect(),
            node_rngs: hb_nodes.iter().map(|n| (*n, substream(seed, &format!("node/{n}")))).collect(),
            hb_rngs: hb_nodes.iter().map(|n| substream(seed, &format!("heartbeat/{n}"))).collect(),
            hb_nodes,
            hb_pending: HashMap::new(),
            hb_tally: BTreeMap::new(),
            clients,
            gateway_rngs: (0..topo.gateways).map(|g| substream(seed, &format!("gateway/{g}"))).collect(),
            gateway_rate,
            fault_rng: substream(seed, "faults"),
            faults,
            conversation,
            client_emissions: 0,
            emitted: BTreeMap::new(),
            delivered: 0,
            dropped: BTreeMap::new(),
            observations: Vec::new(),
            latencies: Vec::new(),
            probe_ranks: vec![vec![0; PROBE_MAX_QUEUE]; PROBE_MAX_QUEUE + 1],
            packet_size: cfg.output.packet_size.unwrap_or_else(default_packet_size),
            bound,
        })
    }

    fn schedule(&mut self, t: u64, ev: Ev) {
        self.seq += 1;
        self.heap.push(Item { t, seq: self.seq, ev });
    }

    fn client_rate(&self) -> f64 {
        match self.cfg.mode {
            Mode::Echomix => self.cfg.clients.rate + self.cfg.clients.loop_rate,
            Mode::Loopix => self.cfg.clients.rate,
        }
    }

    fn start(&mut self) {
        let rate = self.client_rate();
        for c in 0..self.topo.clients {
            if rate > 0.0 {
                let gap = exp_gap(rate, &mut self.clients[c as usize].rng);
                self.schedule(gap, Ev::ClientEmit(c));
            }
            if self.cfg.mode == Mode::Loopix && self.cfg.clients.loop_rate > 0.0 {
                let gap = exp_gap(self.cfg.clients.loop_rate, &mut self.clients[c as usize].rng);
                self.schedule(gap, Ev::LoopEmit(c));
            }
        }
        if self.gateway_rate > 0.0 {
            for g in 0..self.topo.gateways {
                let gap = exp_gap(self.gateway_rate, &mut self.gateway_rngs[g as usize]);
                self.schedule(gap, Ev::GatewayEmit(g));
            }
        }
        if self.cfg.heartbeat.rate > 0.0 {
            for i in 0..self.hb_nodes.len() {
                let gap = exp_gap(self.cfg.heartbeat.rate, &mut self.hb_rngs[i]);
                self.schedule(gap, Ev::HeartbeatEmit(i));
            }
        }
        if let Some(c) = &self.cfg.conversation {
            self.schedule(to_ns(c.start_s), Ev::ConversationTick);
        }
    }

    fn run(mut self) -> Result<SimOutput, MixsimError> {
        self.start();
        while let Some(item) = self.heap.pop() {
            if !self.cfg.drain && item.t > self.duration {
                self.now = self.duration;
                break;
            }
            self.now = item.t;
            self.dispatch(item.ev)?;
        }
        Ok(self.finish())
    }

    fn offline(&self, client: u32, t: u64) -> bool {
        self.clients[client as usize].offline.iter().any(|(s, e)| *s <= t && t < *e)
    }

    fn dispatch(&mut self, ev: Ev) -> Result<(), MixsimError> {
        let live = self.now < self.duration;
        match ev {
            Ev::ClientEmit(c) => {
                if !live || self.cfg.clients.emission_limit.is_some_and(|l| self.client_emissions >= l) {
                    return Ok(());
                }
                let rate = self.client_rate();
                let gap = exp_gap(rate, &mut self.clients[c as usize].rng);
                self.schedule(self.now + gap, Ev::ClientEmit(c));
                if self.offline(c, self.now) {
                    return Ok(());
                }
                self.client_emissions += 1;
                match self.cfg.mode {
                    Mode::Echomix => self.emit_echo(c),
                    Mode::Loopix => self.emit_loopix_payload(c),
                }
            }
            Ev::LoopEmit(c) => {
                if !live {
                    return Ok(());
                }
                let gap = exp_gap(self.cfg.clients.loop_rate, &mut self.clients[c as usize].rng);
                self.schedule(self.now + gap, Ev::LoopEmit(c));
                if self.offline(c, self.now) {
                    return Ok(());
                }
                let st = &mut self.clients[c as usize];
                let me = NodeId::client(c);
                let route = self.topo.loopix_route(me, st.provider, st.provider, Some(me), &mut st.rng);
                self.inject(PacketKind::LoopixLoop, false, route);
            }
            Ev::GatewayEmit(g) => {
                if !live {
                    return Ok(());
                }
                let rng = &mut self.gateway_rngs[g as usize];
                let gap = exp_gap(self.gateway_rate, rng);
                let route = self.topo.gateway_decoy_route(NodeId::gateway(g), rng);
                self.schedule(self.now + gap, Ev::GatewayEmit(g));
                if self.node_down(NodeId::gateway(g)) {
                    return Ok(());
                }
                self.inject(PacketKind::GatewayDecoy, false, route);
            }
            Ev::HeartbeatEmit(i) => {
                if !live {
                    return Ok(());
                }
                let origin = self.hb_nodes[i];
                let rng = &mut self.hb_rngs[i];
                let gap = exp_gap(self.cfg.heartbeat.rate, rng);
                let route = self.topo.heartbeat_route(origin, rng);
                self.schedule(self.now + gap, Ev::HeartbeatEmit(i));
                if self.node_down(origin) {
                    return Ok(());
                }
                let links = route.windows(2).map(|w| (w[0].node, w[1].node)).collect();
                let id = self.inject(PacketKind::Heartbeat, false, route);
                self.hb_pending.insert(id, links);
                self.schedule(self.now + to_ns(self.cfg.heartbeat.timeout_s), Ev::HeartbeatTimeout(id));
            }
            Ev::ConversationTick => {
                if !live {
                    return Ok(());
                }
                self.conversation_tick()?;
            }
            Ev::Arrive(p) => self.arrive(p),
            Ev::Release(p) => {
                let Some(pkt) = self.packets.get(&p) else { return Ok(()) };
                let node = pkt.route[pkt.pos].node;
                if let Some(st) = self.nodes.get_mut(&node) {
                    st.queue.retain(|(id, _, _)| *id != p);
                }
                // A node that failed while holding the packet loses it.
                if self.node_down(node) {
                    self.drop_packet(p, DropCause::NodeDown);
                } else {
                    self.forward(p);
                }
            }
            Ev::HeartbeatTimeout(p) => {
                if let Some(links) = self.hb_pending.remove(&p) {
                    self.tally(links, false);
                }
            }
        }
        Ok(())
    }

    fn conversation_tick(&mut self) -> Result<(), MixsimError> {
        let Some(conv) = &mut self.conversation else { return Ok(()) };
        let (sender, receiver) = (conv.sender, conv.receiver);
        let next = self.now + conv.interval;
        match self.cfg.mode {
            Mode::Echomix => {
                let keys = conv.cursor.next_keys().map_err(|e| MixsimError::Route(e.to_string()))?;
                let dest = match self.cfg.clients.favourite_service {
                    Some(s) => Destination::Fixed(s),
                    None => Destination::Pseudorandom(bacap_destination(&keys.box_id.to_bytes(), self.topo.services)),
                };
                // Writer deposits, reader fetches the same box.
                self.clients[sender as usize].mux.push(dest)?;
                self.clients[receiver as usize].mux.push(dest)?;
            }
            Mode::Loopix => self.clients[sender as usize].loopix_queue.push_back(receiver),
        }
        self.schedule(next, Ev::ConversationTick);
        Ok(())
    }

    fn emit_echo(&mut self, c: u32) {
        let st = &mut self.clients[c as usize];
        let e = st.mux.next(&mut st.rng);
        let replica = (self.topo.replicas > 0).then(|| NodeId::replica(st.rng.gen_range(0..self.topo.replicas)));
        let route = self.topo.echo_route(NodeId::client(c), NodeId::service(e.service), replica, &mut st.rng);
        self.inject(PacketKind::Echo, e.app, route);
    }

    fn emit_loopix_payload(&mut self, c: u32) {
        let services = self.topo.services;
        let st = &mut self.clients[c as usize];
        let me = NodeId::client(c);
        let own = st.provider;
        let (kind, app, route) = match st.loopix_queue.pop_front() {
            Some(rcv) => {
                let dest = NodeId::service(rcv % services);
                let route = self.topo.loopix_route(me, own, dest, Some(NodeId::client(rcv)), &mut st.rng);
                (PacketKind::LoopixPayload, true, route)
            }
            None => {
                let dest = NodeId::service(st.rng.gen_range(0..services));
                (PacketKind::LoopixDrop, false, self.topo.loopix_route(me, own, dest, None, &mut st.rng))
            }
        };
        self.inject(kind, app, route);
    }

    fn inject(&mut self, kind: PacketKind, app: bool, route: Vec<Step>) -> u64 {
        debug_assert!(self.topo.check_route(&route).is_ok());
        let id = self.next_packet;
        self.next_packet += 1;
        *self.emitted.entry(kind).or_default() += 1;
        self.packets.insert(
            id,
            Packet {
                kind,
                app,
                route,
                pos: 0,
                emitted: self.now,
            },
        );
        self.forward(id);
        id
    }

    fn drop_packet(&mut self, id: u64, cause: DropCause) {
        self.packets.remove(&id);
        *self.dropped.entry(cause).or_default() += 1;
    }

    fn node_down(&self, n: NodeId) -> bool {
        self.faults.iter().any(|f| {
            matches!(&f.spec, FaultSpec::NodeDown { node, .. } if *node == n) && f.start <= self.now && self.now < f.end
        })
    }

    fn arrive(&mut self, id: u64) {
        let Some(pkt) = self.packets.get(&id) else { return };
        let step = pkt.route[pkt.pos];
        let last = pkt.pos + 1 == pkt.route.len();
        if step.node.kind == NodeKind::Client {
            if last && self.offline(step.node.index, self.now) {
                return self.drop_packet(id, DropCause::ClientOffline);
            }
        } else if self.node_down(step.node) {
            return self.drop_packet(id, DropCause::NodeDown);
        }
        if last {
            return self.deliver(id);
        }
        if !step.delay {
            return self.forward(id);
        }
        if self.cfg.output.probe == Some(step.node) {
            self.probe_snapshot(step.node);
        }
        let rng = self.node_rngs.get_mut(&step.node).expect("network node");
        let d = to_ns(sample_hop_delay(self.cfg.mix.lambda, rng).expect("validated rate"));
        let release = self.now + d;
        self.nodes
            .get_mut(&step.node)
            .expect("network node")
            .queue
            .push((id, self.now, release));
        self.schedule(release, Ev::Release(id));
    }

    fn probe_snapshot(&mut self, node: NodeId) {
        let q = &self.nodes[&node].queue;
        let m = q.len();
        if (2..=PROBE_MAX_QUEUE).contains(&m) {
            let mut by_arrival: Vec<&(u64, u64, u64)> = q.iter().collect();
            by_arrival.sort_by_key(|(id, arr, _)| (*arr, *id));
            let rank = by_arrival
                .iter()
                .enumerate()
                .min_by_key(|(_, (_, _, rel))| *rel)
                .map(|(i, _)| i)
                .expect("non-empty");
            self.probe_ranks[m][rank] += 1;
        }
    }

    fn forward(&mut self, id: u64) {
        let pkt = self.packets.get(&id).expect("live packet");
        let from = pkt.route[pkt.pos].node;
        let to = pkt.route[pkt.pos + 1].node;
        let now = self.now;
        for i in 0..self.faults.len() {
            let f = &self.faults[i];
            if now < f.start || now >= f.end {
                continue;
            }
            match f.spec {
                FaultSpec::DropLink { from: a, to: b, prob, .. } if a == from && b == to => {
                    if prob >= 1.0 || self.fault_rng.gen_bool(prob) {
                        return self.drop_packet(id, DropCause::LinkFault);
                    }
                }
                FaultSpec::NMinusOne { node, keep_from, .. } if node == to && keep_from != from => {
                    return self.drop_packet(id, DropCause::NMinusOne);
                }
                _ => {}
            }
        }
        if self.cfg.output.observations {
            self.observations.push(LinkObservation {
                t_ns: now,
                src: from,
                dst: to,
                size: self.packet_size,
            });
        }
        self.packets.get_mut(&id).expect("live packet").pos += 1;
        let at = now + to_ns(self.cfg.mix.link_latency_s);
        self.schedule(at, Ev::Arrive(id));
    }

    fn deliver(&mut self, id: u64) {
        let pkt = self.packets.remove(&id).expect("live packet");
        self.delivered += 1;
        self.latencies.push(LatencyRecord {
            packet: id,
            kind: pkt.kind,
            app: pkt.app,
            emitted_ns: pkt.emitted,
            latency_ns: self.now - pkt.emitted,
        });
        if pkt.kind == PacketKind::Heartbeat {
            if let Some(links) = self.hb_pending.remove(&id) {
                self.tally(links, true);
            }
        }
    }

    fn tally(&mut self, links: Vec<(NodeId, NodeId)>, returned: bool) {
        let epoch = self.now / to_ns(self.cfg.heartbeat.epoch_s);
        for (a, b) in links {
            let e = self.hb_tally.entry((epoch, a, b)).or_default();
            e.0 += 1;
            e.1 += returned as u64;
        }
    }

    fn finish(self) -> SimOutput {
        let echo: Vec<f64> = self
            .latencies
            .iter()
            .filter(|l| l.kind == PacketKind::Echo)
            .map(|l| to_s(l.latency_ns))
            .collect();
        let threshold = 20.0 / self.cfg.mix.lambda;
        let echo_rtt = if echo.is_empty() {
            LatencySummary::default()
        } else {
            LatencySummary {
                count: echo.len() as u64,
                mean_s: crate::stats::mean(&echo),
                std_s: crate::stats::std_dev(&echo),
                max_s: echo.iter().cloned().fold(0.0, f64::max),
                frac_over_20mu: echo.iter().filter(|&&x| x > threshold).count() as f64 / echo.len() as f64,
            }
        };
        let mut pki_view: Vec<EpochRatings> = Vec::new();
        for (&(epoch, from, to), &(sent, returned)) in &self.hb_tally {
            if pki_view.last().map(|e| e.epoch) != Some(epoch) {
                pki_view.push(EpochRatings { epoch, links: Vec::new() });
            }
            pki_view.last_mut().expect("pushed").links.push(LinkRating {
                from,
                to,
                sent,
                returned,
                rating: returned as f64 / sent as f64,
            });
        }
        let emitted_total: u64 = self.emitted.values().sum();
        let dropped_total: u64 = self.dropped.values().sum();
        let in_flight = self.packets.len() as u64;
        let receiver_service = self.cfg.conversation.as_ref().and_then(|c| match self.cfg.mode {
            Mode::Loopix => Some(NodeId::service(c.receiver % self.topo.services)),
            Mode::Echomix => None,
        });
        let summary = Summary {
            schema_version: super::config::SCHEMA_VERSION,
            name: self.cfg.name.clone(),
            mode: self.cfg.mode,
            seed: self.cfg.seed,
            duration_s: self.cfg.duration_s,
            end_s: to_s(self.now),
            emitted: self.emitted.clone(),
            emitted_total,
            delivered: self.delivered,
            dropped: self.dropped.clone(),
            in_flight,
            conserved: emitted_total == self.delivered + dropped_total + in_flight,
            echo_rtt,
            observations: self.observations.len() as u64,
            packet_size: self.packet_size,
            wire_uniform: self.observations.iter().all(|o| o.size == self.packet_size),
            coupon_bound: self.bound,
            gateway_decoy_rate_per_s: self.gateway_rate,
        };
        SimOutput {
            config: self.cfg.clone(),
            summary,
            observations: self.observations,
            latencies: self.latencies,
            pki_view,
            probe_ranks: self.probe_ranks,
            receiver_service,
        }
    }
}

/// Runs a scenario with its own seed.
pub fn run(cfg: &ScenarioConfig) -> Result<SimOutput, MixsimError> {
    run_with_seed(cfg, cfg.seed)
}

pub fn run_with_seed(cfg: &ScenarioConfig, seed: u64) -> Result<SimOutput, MixsimError> {
    let mut cfg = cfg.clone();
    cfg.seed = seed;
    let engine = Engine::new(&cfg, seed)?;
    engine.run()
}

/// Latencies of `trips` packets through `k` memoryless mixes in series.
pub fn chain_latencies(k: u32, lambda: f64, trips: usize, seed: u64) -> Result<Vec<f64>, MixsimError> {
    let mut rngs: Vec<ChaCha20Rng> = (0..k).map(|i| substream(seed, &format!("chain/{i}"))).collect();
    let mut heap: BinaryHeap<Item> = BinaryHeap::new();
    let mut hop = vec![0u32; trips];
    let mut out = vec![0.0; trips];
    let mut seq = 0;
    let mut arrival_rng = substream(seed, "chain/source");
    let mut t = 0;
    for p in 0..trips {
        t += exp_gap(lambda, &mut arrival_rng);
        seq += 1;
        heap.push(Item {
            t,
            seq,
            ev: Ev::Arrive(p as u64),
        });
    }
    let mut start = vec![0u64; trips];
    while let Some(Item { t, ev, .. }) = heap.pop() {
        let (Ev::Arrive(p) | Ev::Release(p)) = ev else { continue };
        let p = p as usize;
        if matches!(ev, Ev::Arrive(_)) {
            start[p] = t;
        }
        if hop[p] == k {
            out[p] = to_s(t - start[p]);
            continue;
        }
        let d = to_ns(sample_hop_delay(lambda, &mut rngs[hop[p] as usize])?);
        hop[p] += 1;
        seq += 1;
        heap.push(Item {
            t: t + d,
            seq,
            ev: Ev::Release(p as u64),
        });
    }
    Ok(out)
}
