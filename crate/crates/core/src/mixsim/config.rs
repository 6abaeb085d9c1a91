//! Scenario files (TOML, schema version 1).
//!
//! ```toml
//! schema_version = 1
//! name = "example"
//! mode = "echomix"            # or "loopix"
//! seed = 7
//! duration_s = 60.0
//! drain = true                # finish in-flight packets after duration
//!
//! [topology]
//! clients = 20
//! gateways = 2
//! layer_width = 10
//! services = 10
//! replicas = 0
//!
//! [mix]
//! lambda = 5.0                # per-hop delay rate, 1/s
//! link_latency_s = 0.0
//!
//! [clients]
//! rate = 1.0                  # emissions per client per second
//! loop_rate = 0.0             # loopix loop stream
//! selection = { kind = "app-first" }
//! strict_coupling = true
//! # emission_limit = 100000
//! # favourite_service = 3     # broken client: pins application traffic
//!
//! [gateway]
//! topup = true
//!
//! [heartbeat]
//! rate = 0.0                  # per network node per second
//! timeout_s = 5.0
//! epoch_s = 60.0
//!
//! [conversation]              # optional
//! sender = 0
//! receiver = 1
//! interval_s = 10.0
//!
//! [[faults]]
//! kind = "drop-link"
//! from = "l1-0"
//! to = "l2-0"
//! prob = 1.0
//!
//! [[churn]]
//! client = 3
//! start_s = 10.0
//! end_s = 20.0
//!
//! [output]
//! observations = true
//! probe = "l2-0"              # record next-release ranks at this node
//! ```

use serde::{Deserialize, Serialize};

use super::coupling::Selection;
use super::topology::{NodeId, NodeKind, Topology};
use super::MixsimError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Echomix,
    Loopix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixParams {
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default)]
    pub link_latency_s: f64,
}

fn default_lambda() -> f64 {
    5.0
}

impl Default for MixParams {
    fn default() -> Self {
        MixParams {
            lambda: default_lambda(),
            link_latency_s: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClientParams {
    #[serde(default = "one")]
    pub rate: f64,
    #[serde(default)]
    pub loop_rate: f64,
    #[serde(default)]
    pub selection: Selection,
    #[serde(default = "yes")]
    pub strict_coupling: bool,
    #[serde(default)]
    pub emission_limit: Option<u64>,
    #[serde(default)]
    pub favourite_service: Option<u32>,
}

fn one() -> f64 {
    1.0
}
fn yes() -> bool {
    true
}

impl Default for ClientParams {
    fn default() -> Self {
        ClientParams {
            rate: 1.0,
            loop_rate: 0.0,
            selection: Selection::default(),
            strict_coupling: true,
            emission_limit: None,
            favourite_service: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GatewayParams {
    /// Top gateway output up to the coupon bound with decoys.
    #[serde(default = "yes")]
    pub topup: bool,
}

impl Default for GatewayParams {
    fn default() -> Self {
        GatewayParams { topup: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeartbeatParams {
    #[serde(default)]
    pub rate: f64,
    #[serde(default = "default_hb_timeout")]
    pub timeout_s: f64,
    #[serde(default = "default_epoch")]
    pub epoch_s: f64,
}

fn default_hb_timeout() -> f64 {
    5.0
}
fn default_epoch() -> f64 {
    60.0
}

impl Default for HeartbeatParams {
    fn default() -> Self {
        HeartbeatParams {
            rate: 0.0,
            timeout_s: default_hb_timeout(),
            epoch_s: default_epoch(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Conversation {
    pub sender: u32,
    pub receiver: u32,
    pub interval_s: f64,
    #[serde(default)]
    pub start_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "kebab-case")]
pub enum FaultSpec {
    DropLink {
        from: NodeId,
        to: NodeId,
        #[serde(default = "one")]
        prob: f64,
        #[serde(default)]
        start_s: f64,
        #[serde(default)]
        end_s: Option<f64>,
    },
    /// Drops everything arriving at `node` except from `keep_from`.
    NMinusOne {
        node: NodeId,
        keep_from: NodeId,
        #[serde(default)]
        start_s: f64,
        #[serde(default)]
        end_s: Option<f64>,
    },
    NodeDown {
        node: NodeId,
        #[serde(default)]
        start_s: f64,
        #[serde(default)]
        end_s: Option<f64>,
    },
}

impl FaultSpec {
    pub fn window(&self) -> (f64, f64) {
        let (s, e) = match self {
            FaultSpec::DropLink { start_s, end_s, .. }
            | FaultSpec::NMinusOne { start_s, end_s, .. }
            | FaultSpec::NodeDown { start_s, end_s, .. } => (*start_s, *end_s),
        };
        (s, e.unwrap_or(f64::INFINITY))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Churn {
    pub client: u32,
    pub start_s: f64,
    pub end_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputParams {
    #[serde(default = "yes")]
    pub observations: bool,
    #[serde(default)]
    pub probe: Option<NodeId>,
    /// Wire size of every packet; defaults to the X25519 NIKE geometry.
    #[serde(default)]
    pub packet_size: Option<u32>,
}

impl Default for OutputParams {
    fn default() -> Self {
        OutputParams {
            observations: true,
            probe: None,
            packet_size: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub duration_s: f64,
    #[serde(default = "yes")]
    pub drain: bool,
    pub topology: Topology,
    #[serde(default)]
    pub mix: MixParams,
    #[serde(default)]
    pub clients: ClientParams,
    #[serde(default)]
    pub gateway: GatewayParams,
    #[serde(default)]
    pub heartbeat: HeartbeatParams,
    #[serde(default)]
    pub conversation: Option<Conversation>,
    #[serde(default)]
    pub faults: Vec<FaultSpec>,
    #[serde(default)]
    pub churn: Vec<Churn>,
    #[serde(default)]
    pub output: OutputParams,
}

fn default_name() -> String {
    "unnamed".into()
}
fn default_seed() -> u64 {
    1
}

fn bad(field: &str, reason: impl Into<String>) -> MixsimError {
    MixsimError::Config {
        field: field.into(),
        reason: reason.into(),
    }
}

fn non_negative(field: &str, v: f64) -> Result<(), MixsimError> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(bad(field, format!("must be a finite non-negative number, got {v}")))
    }
}

fn positive(field: &str, v: f64) -> Result<(), MixsimError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(bad(field, format!("must be a finite positive number, got {v}")))
    }
}

pub const BUNDLED: &[(&str, &str)] = &[
    ("echomix-baseline", include_str!("../../scenarios/echomix-baseline.toml")),
    ("loopix-leak", include_str!("../../scenarios/loopix-leak.toml")),
    ("echomix-leak-control", include_str!("../../scenarios/echomix-leak-control.toml")),
];

impl ScenarioConfig {
    pub fn from_toml(s: &str) -> Result<Self, MixsimError> {
        let cfg: ScenarioConfig = toml::from_str(s).map_err(|e| MixsimError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn bundled(name: &str) -> Option<Self> {
        BUNDLED
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, s)| Self::from_toml(s).expect("bundled scenario is valid"))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("serializable")
    }

    pub fn validate(&self) -> Result<(), MixsimError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(bad(
                "schema_version",
                format!("unsupported version {} (expected {SCHEMA_VERSION})", self.schema_version),
            ));
        }
        positive("duration_s", self.duration_s)?;
        self.topology.validate()?;
        positive("mix.lambda", self.mix.lambda)?;
        non_negative("mix.link_latency_s", self.mix.link_latency_s)?;
        non_negative("clients.rate", self.clients.rate)?;
        non_negative("clients.loop_rate", self.clients.loop_rate)?;
        match self.clients.selection {
            Selection::Coin { p } if !(0.0..=1.0).contains(&p) => {
                return Err(bad("clients.selection.p", "must lie in [0, 1]"));
            }
            Selection::Batch { size: 0 } => return Err(bad("clients.selection.size", "must be at least 1")),
            _ => {}
        }
        if let Some(s) = self.clients.favourite_service {
            if s >= self.topology.services {
                return Err(bad("clients.favourite_service", "names a service outside the topology"));
            }
        }
        non_negative("heartbeat.rate", self.heartbeat.rate)?;
        positive("heartbeat.timeout_s", self.heartbeat.timeout_s)?;
        positive("heartbeat.epoch_s", self.heartbeat.epoch_s)?;
        if let Some(c) = &self.conversation {
            positive("conversation.interval_s", c.interval_s)?;
            non_negative("conversation.start_s", c.start_s)?;
            for (f, v) in [("conversation.sender", c.sender), ("conversation.receiver", c.receiver)] {
                if v >= self.topology.clients {
                    return Err(bad(f, format!("client {v} outside topology")));
                }
            }
            if c.sender == c.receiver {
                return Err(bad("conversation.receiver", "must differ from sender"));
            }
        }
        for (i, f) in self.faults.iter().enumerate() {
            let field = |name: &str| format!("faults[{i}].{name}");
            let (s, e) = f.window();
            non_negative(&field("start_s"), s)?;
            if e <= s {
                return Err(bad(&field("end_s"), "must exceed start_s"));
            }
            let nodes: Vec<(&str, NodeId)> = match f {
                FaultSpec::DropLink { from, to, prob, .. } => {
                    if !(0.0..=1.0).contains(prob) {
                        return Err(bad(&field("prob"), "must lie in [0, 1]"));
                    }
                    if !self.topology.link_allowed(*from, *to) {
                        return Err(bad(&field("to"), format!("{from} -> {to} is not a link of the topology")));
                    }
                    vec![("from", *from), ("to", *to)]
                }
                FaultSpec::NMinusOne { node, keep_from, .. } => vec![("node", *node), ("keep_from", *keep_from)],
                FaultSpec::NodeDown { node, .. } => vec![("node", *node)],
            };
            for (name, n) in nodes {
                if !self.topology.contains(n) {
                    return Err(bad(&field(name), format!("{n} is not in the topology")));
                }
            }
        }
        for (i, c) in self.churn.iter().enumerate() {
            if c.client >= self.topology.clients {
                return Err(bad(&format!("churn[{i}].client"), "client outside topology"));
            }
            if c.end_s <= c.start_s {
                return Err(bad(&format!("churn[{i}].end_s"), "must exceed start_s"));
            }
        }
        if let Some(p) = self.output.probe {
            if !self.topology.contains(p) || matches!(p.kind, NodeKind::Client | NodeKind::Replica) {
                return Err(bad("output.probe", format!("{p} is not a mixing node of the topology")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "schema_version = 1\nduration_s = 1.0\n[topology]\nclients = 1\ngateways = 1\nlayer_width = 2\nservices = 1\nreplicas = 0\n";

    #[test]
    fn bundled_scenarios_parse() {
        for (name, _) in BUNDLED {
            assert!(ScenarioConfig::bundled(name).is_some(), "{name}");
        }
        assert!(ScenarioConfig::bundled("nope").is_none());
    }

    #[test]
    fn defaults_fill_minimal_file_and_round_trip() {
        let c = ScenarioConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(c.mix.lambda, 5.0);
        assert_eq!(c.mode, Mode::Echomix);
        assert_eq!(ScenarioConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn errors_name_the_offending_field() {
        let e = ScenarioConfig::from_toml(&MINIMAL.replace("[topology]", "lamda = 3\n[topology]")).unwrap_err();
        assert!(e.to_string().contains("lamda"), "{e}");
        let e = ScenarioConfig::from_toml(&format!("{MINIMAL}[mix]\nlambda = -1.0\n")).unwrap_err();
        assert!(e.to_string().contains("mix.lambda"), "{e}");
        let e = ScenarioConfig::from_toml(&MINIMAL.replace("layer_width = 2", "layer_width = 0")).unwrap_err();
        assert!(e.to_string().contains("topology.layer_width"), "{e}");
        let e = ScenarioConfig::from_toml(&format!(
            "{MINIMAL}[[faults]]\nkind = \"drop-link\"\nfrom = \"l1-0\"\nto = \"l3-0\"\n"
        ))
        .unwrap_err();
        assert!(e.to_string().contains("faults[0].to"), "{e}");
        let e = ScenarioConfig::from_toml(&MINIMAL.replace("schema_version = 1", "schema_version = 9")).unwrap_err();
        assert!(e.to_string().contains("schema_version"), "{e}");
    }
}
