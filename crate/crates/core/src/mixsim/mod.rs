//! Discrete-event simulator of the mix network.
//!
//! A scenario (see [`ScenarioConfig`]) fixes the topology, traffic rates,
//! faults and seed; [`run`] returns every link observation a global passive
//! adversary would record together with latencies, heartbeat link ratings
//! and conservation counters. Identical configurations yield identical
//! output.

mod analysis;
mod config;
mod coupling;
mod dist;
mod engine;
mod topology;


pub use analysis::{
    gpa_last_hop_test, link_coverage, memoryless_test, write_jsonl, CoverageReport, LastHopReport, Record,
    RecordSelection,
};
pub use config::{
    Churn, ClientParams, Conversation, FaultSpec, GatewayParams, HeartbeatParams, MixParams, Mode, OutputParams,
    ScenarioConfig, BUNDLED, SCHEMA_VERSION,
};
pub use coupling::{bacap_destination, destination_uniformity, CouplingMux, Destination, Emission, Selection};
pub use dist::{coupon_bound, coupon_draws, rtt_distribution, sample_hop_delay, CouponBound, ErlangRtt};
pub use engine::{
    chain_latencies, default_packet_size, run, run_with_seed, substream, to_ns, to_s, DropCause, EpochRatings,
    LatencyRecord, LatencySummary, LinkObservation, LinkRating, PacketKind, SimOutput, Summary, PROBE_MAX_QUEUE,
};
pub use topology::{NodeId, NodeKind, Step, Topology};

#[derive(Debug, thiserror::Error)]
pub enum MixsimError {
    #[error("rate must be positive and finite, got {0}")]
    InvalidRate(f64),
    #[error("invalid `{field}`: {reason}")]
    Config { field: String, reason: String },
    #[error("route error: {0}")]
    Route(String),
    #[error("scenario parse error: {0}")]
    Parse(String),
    #[error("coupling contract violated: {0}")]
    ContractViolation(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
