//! Layered topology and route construction.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::MixsimError;

pub const MIX_LAYERS: u8 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NodeKind {
    Client,
    Gateway,
    Mix(u8),
    /// Courier/service; the persistent provider in Loopix mode.
    Service,
    Replica,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId {
    pub kind: NodeKind,
    pub index: u32,
}

impl NodeId {
    pub const fn new(kind: NodeKind, index: u32) -> Self {
        NodeId { kind, index }
    }
    pub const fn client(i: u32) -> Self {
        Self::new(NodeKind::Client, i)
    }
    pub const fn gateway(i: u32) -> Self {
        Self::new(NodeKind::Gateway, i)
    }
    pub const fn mix(layer: u8, i: u32) -> Self {
        Self::new(NodeKind::Mix(layer), i)
    }
    pub const fn service(i: u32) -> Self {
        Self::new(NodeKind::Service, i)
    }
    pub const fn replica(i: u32) -> Self {
        Self::new(NodeKind::Replica, i)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            NodeKind::Client => write!(f, "client-{}", self.index),
            NodeKind::Gateway => write!(f, "gw-{}", self.index),
            NodeKind::Mix(l) => write!(f, "l{}-{}", l, self.index),
            NodeKind::Service => write!(f, "svc-{}", self.index),
            NodeKind::Replica => write!(f, "replica-{}", self.index),
        }
    }
}

impl FromStr for NodeId {
    type Err = MixsimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || MixsimError::Config {
            field: "node".into(),
            reason: format!("unrecognised node name {s:?} (expected client-N, gw-N, l1-N..l3-N, svc-N, replica-N)"),
        };
        let (prefix, idx) = s.rsplit_once('-').ok_or_else(bad)?;
        let index: u32 = idx.parse().map_err(|_| bad())?;
        let kind = match prefix {
            "client" => NodeKind::Client,
            "gw" => NodeKind::Gateway,
            "svc" => NodeKind::Service,
            "replica" => NodeKind::Replica,
            "l1" => NodeKind::Mix(1),
            "l2" => NodeKind::Mix(2),
            "l3" => NodeKind::Mix(3),
            _ => return Err(bad()),
        };
        Ok(NodeId { kind, index })
    }
}

impl Serialize for NodeId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for NodeId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One position on a route: the node and whether it applies a mixing delay.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Step {
    pub node: NodeId,
    pub delay: bool,
}

impl Step {
    fn mixing(node: NodeId) -> Self {
        Step { node, delay: true }
    }
    fn pass(node: NodeId) -> Self {
        Step { node, delay: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Topology {
    pub clients: u32,
    pub gateways: u32,
    pub layer_width: u32,
    pub services: u32,
    /// Services consult one uniformly chosen replica per echo when non-zero.
    #[serde(default)]
    pub replicas: u32,
}

impl Topology {
    pub fn validate(&self) -> Result<(), MixsimError> {
        for (field, v) in [
            ("topology.gateways", self.gateways),
            ("topology.layer_width", self.layer_width),
            ("topology.services", self.services),
        ] {
            if v == 0 {
                return Err(MixsimError::Config {
                    field: field.into(),
                    reason: "must be at least 1".into(),
                });
            }
        }
        Ok(())
    }

    pub fn count(&self, kind: NodeKind) -> u32 {
        match kind {
            NodeKind::Client => self.clients,
            NodeKind::Gateway => self.gateways,
            NodeKind::Mix(l) if (1..=MIX_LAYERS).contains(&l) => self.layer_width,
            NodeKind::Mix(_) => 0,
            NodeKind::Service => self.services,
            NodeKind::Replica => self.replicas,
        }
    }

    pub fn contains(&self, n: NodeId) -> bool {
        n.index < self.count(n.kind)
    }

    /// Every node that mixes, originates heartbeats and holds a queue.
    pub fn network_nodes(&self) -> Vec<NodeId> {
        let mut v: Vec<NodeId> = (0..self.gateways).map(NodeId::gateway).collect();
        for l in 1..=MIX_LAYERS {
            v.extend((0..self.layer_width).map(|i| NodeId::mix(l, i)));
        }
        v.extend((0..self.services).map(NodeId::service));
        v
    }

    /// Whether `a -> b` is a permitted directed link.
    pub fn link_allowed(&self, a: NodeId, b: NodeId) -> bool {
        use NodeKind::*;
        self.contains(a)
            && self.contains(b)
            && matches!(
                (a.kind, b.kind),
                (Client, Gateway)
                    | (Gateway, Client)
                    | (Client, Service)
                    | (Service, Client)
                    | (Gateway, Mix(1))
                    | (Service, Mix(1))
                    | (Mix(1), Mix(2))
                    | (Mix(2), Mix(3))
                    | (Mix(3), Service)
                    | (Mix(3), Gateway)
                    | (Service, Replica)
                    | (Replica, Service)
            )
    }

    pub fn check_route(&self, route: &[Step]) -> Result<(), MixsimError> {
        for w in route.windows(2) {
            if !self.link_allowed(w[0].node, w[1].node) {
                return Err(MixsimError::Route(format!("{} -> {}", w[0].node, w[1].node)));
            }
        }
        Ok(())
    }

    fn random_mix<R: Rng + ?Sized>(&self, layer: u8, rng: &mut R) -> NodeId {
        NodeId::mix(layer, rng.gen_range(0..self.layer_width))
    }

    fn mixes<R: Rng + ?Sized>(&self, rng: &mut R) -> [Step; 3] {
        [1, 2, 3].map(|l| Step::mixing(self.random_mix(l, rng)))
    }

    /// Echo: client, gateway, three mixes, service (optionally via a replica),
    /// three mixes, gateway, client. Nine mixing steps.
    pub fn echo_route<R: Rng + ?Sized>(
        &self,
        client: NodeId,
        service: NodeId,
        replica: Option<NodeId>,
        rng: &mut R,
    ) -> Vec<Step> {
        let gw_out = NodeId::gateway(rng.gen_range(0..self.gateways));
        let gw_back = NodeId::gateway(rng.gen_range(0..self.gateways));
        let mut r = vec![Step::pass(client), Step::mixing(gw_out)];
        r.extend(self.mixes(rng));
        r.push(Step::mixing(service));
        if let Some(rep) = replica {
            r.push(Step::pass(rep));
            r.push(Step::pass(service));
        }
        r.extend(self.mixes(rng));
        r.push(Step::mixing(gw_back));
        r.push(Step::pass(client));
        r
    }

    /// Gateway-originated decoy with the same shape as a client echo.
    pub fn gateway_decoy_route<R: Rng + ?Sized>(&self, gw: NodeId, rng: &mut R) -> Vec<Step> {
        let service = NodeId::service(rng.gen_range(0..self.services));
        let mut r = vec![Step::pass(gw)];
        r.extend(self.mixes(rng));
        r.push(Step::mixing(service));
        r.extend(self.mixes(rng));
        r.push(Step::pass(NodeId::gateway(rng.gen_range(0..self.gateways))));
        r
    }

    /// Loop from `origin` around the layer cycle (edge, L1, L2, L3) back to
    /// itself. Edge positions pick a gateway or service uniformly.
    pub fn heartbeat_route<R: Rng + ?Sized>(&self, origin: NodeId, rng: &mut R) -> Vec<Step> {
        let pos = match origin.kind {
            NodeKind::Mix(l) => l,
            _ => 0,
        };
        let mut r = vec![Step::pass(origin)];
        let mut p = (pos + 1) % 4;
        while p != pos {
            let node = if p == 0 {
                let edges = self.gateways + self.services;
                let e = rng.gen_range(0..edges);
                if e < self.gateways {
                    NodeId::gateway(e)
                } else {
                    NodeId::service(e - self.gateways)
                }
            } else {
                self.random_mix(p, rng)
            };
            r.push(Step::mixing(node));
            p = (p + 1) % 4;
        }
        r.push(Step::pass(origin));
        r
    }

    /// Loopix: client, own provider, three mixes, destination provider and,
    /// for loops, back to the client.
    pub fn loopix_route<R: Rng + ?Sized>(
        &self,
        client: NodeId,
        own_provider: NodeId,
        dest_provider: NodeId,
        deliver_to: Option<NodeId>,
        rng: &mut R,
    ) -> Vec<Step> {
        let mut r = vec![Step::pass(client), Step::mixing(own_provider)];
        r.extend(self.mixes(rng));
        r.push(Step::pass(dest_provider));
        if let Some(c) = deliver_to {
            r.push(Step::pass(c));
        }
        r
    }

    /// Directed links between consecutive layers of the gateway/mix cycle.
    pub fn inter_layer_links(&self) -> Vec<(NodeId, NodeId)> {
        let mut v = Vec::new();
        let w = self.layer_width;
        for g in 0..self.gateways {
            for i in 0..w {
                v.push((NodeId::gateway(g), NodeId::mix(1, i)));
                v.push((NodeId::mix(3, i), NodeId::gateway(g)));
            }
        }
        for l in 1..MIX_LAYERS {
            for i in 0..w {
                for j in 0..w {
                    v.push((NodeId::mix(l, i), NodeId::mix(l + 1, j)));
                }
            }
        }
        v
    }
}
