//! Adversary-view statistics over simulator output, and JSONL export.

use std::collections::{BTreeMap, HashSet};
use std::io::Write;

use serde::Serialize;

use super::config::ScenarioConfig;
use super::engine::{to_ns, EpochRatings, LatencyRecord, LinkObservation, SimOutput, Summary, PROBE_MAX_QUEUE};
use super::topology::{NodeId, NodeKind};
use super::MixsimError;
use crate::stats::{binomial_z, chi_square_uniform, TestResult};

/// Counts a global passive adversary sees on last-layer-to-service links.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LastHopReport {
    pub total: u64,
    pub counts: Vec<u64>,
    /// Binomial z of each service against an even `1/services` share.
    pub z: Vec<f64>,
    pub max_abs_z: f64,
    pub receiver: Option<NodeId>,
    pub receiver_z: Option<f64>,
}

pub fn gpa_last_hop_test(out: &SimOutput) -> LastHopReport {
    let services = out.config.topology.services as usize;
    let mut counts = vec![0u64; services];
    for o in &out.observations {
        if matches!(o.src.kind, NodeKind::Mix(3)) && o.dst.kind == NodeKind::Service {
            counts[o.dst.index as usize] += 1;
        }
    }
    let total: u64 = counts.iter().sum();
    let p = 1.0 / services as f64;
    let z: Vec<f64> = counts.iter().map(|&c| binomial_z(c, total, p)).collect();
    let max_abs_z = z.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let receiver_z = out.receiver_service.map(|r| z[r.index as usize]);
    LastHopReport {
        total,
        counts,
        z,
        max_abs_z,
        receiver: out.receiver_service,
        receiver_z,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageReport {
    pub window_s: f64,
    pub windows: u64,
    pub links: usize,
    /// Worst link's fraction of windows carrying at least one packet.
    pub per_link_min: f64,
    pub per_link_mean: f64,
    /// Fraction of windows in which every link carried a packet.
    pub all_links: f64,
    /// Same, restricted to first-to-second mix layer links.
    pub all_l1_l2: f64,
}

/// Link activity over consecutive windows of one mean hop delay, ignoring
/// windows that start before `warmup_s`.
pub fn link_coverage(out: &SimOutput, warmup_s: f64) -> CoverageReport {
    let topo = &out.config.topology;
    let links = topo.inter_layer_links();
    let index: BTreeMap<(NodeId, NodeId), usize> = links.iter().enumerate().map(|(i, l)| (*l, i)).collect();
    let window = to_ns(1.0 / out.config.mix.lambda).max(1);
    let first = to_ns(warmup_s).div_ceil(window);
    let last = to_ns(out.config.duration_s) / window;
    let windows = last.saturating_sub(first);
    let mut active: Vec<HashSet<usize>> = vec![HashSet::new(); windows as usize];
    for o in &out.observations {
        let w = o.t_ns / window;
        if w < first || w >= last {
            continue;
        }
        if let Some(&i) = index.get(&(o.src, o.dst)) {
            active[(w - first) as usize].insert(i);
        }
    }
    let mut per_link = vec![0u64; links.len()];
    for set in &active {
        for &i in set {
            per_link[i] += 1;
        }
    }
    let l12: Vec<usize> = links
        .iter()
        .enumerate()
        .filter(|(_, (a, b))| a.kind == NodeKind::Mix(1) && b.kind == NodeKind::Mix(2))
        .map(|(i, _)| i)
        .collect();
    let wf = windows.max(1) as f64;
    let frac: Vec<f64> = per_link.iter().map(|&c| c as f64 / wf).collect();
    CoverageReport {
        window_s: window as f64 / 1e9,
        windows,
        links: links.len(),
        per_link_min: frac.iter().cloned().fold(f64::INFINITY, f64::min).min(1.0),
        per_link_mean: frac.iter().sum::<f64>() / frac.len().max(1) as f64,
        all_links: active.iter().filter(|s| s.len() == links.len()).count() as f64 / wf,
        all_l1_l2: active.iter().filter(|s| l12.iter().all(|i| s.contains(i))).count() as f64 / wf,
    }
}

/// For each queue length `m`, chi-square of which queued packet (by arrival
/// order) leaves first against uniform over `m`.
pub fn memoryless_test(probe_ranks: &[Vec<u64>], min_samples: u64) -> Vec<(usize, TestResult)> {
    (2..=PROBE_MAX_QUEUE.min(probe_ranks.len().saturating_sub(1)))
        .filter_map(|m| {
            let counts = &probe_ranks[m][..m];
            (counts.iter().sum::<u64>() >= min_samples).then(|| (m, chi_square_uniform(counts)))
        })
        .collect()
}

/// Which record streams to export besides the header and summary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RecordSelection {
    pub observations: bool,
    pub latencies: bool,
    pub ratings: bool,
}

impl Default for RecordSelection {
    fn default() -> Self {
        RecordSelection {
            observations: true,
            latencies: true,
            ratings: true,
        }
    }
}

#[derive(Debug, Serialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Record<'a> {
    Header {
        schema_version: u32,
        config: &'a ScenarioConfig,
    },
    Observation(&'a LinkObservation),
    Latency(&'a LatencyRecord),
    Ratings(&'a EpochRatings),
    Summary(&'a Summary),
}

/// One JSON object per line: header first, summary last.
pub fn write_jsonl<W: Write>(out: &SimOutput, sel: RecordSelection, w: &mut W) -> Result<(), MixsimError> {
    let mut line = |r: &Record| -> Result<(), MixsimError> {
        serde_json::to_writer(&mut *w, r).map_err(|e| MixsimError::Io(e.into()))?;
        w.write_all(b"\n")?;
        Ok(())
    };
    line(&Record::Header {
        schema_version: super::config::SCHEMA_VERSION,
        config: &out.config,
    })?;
    if sel.observations {
        for o in &out.observations {
            line(&Record::Observation(o))?;
        }
    }
    if sel.latencies {
        for l in &out.latencies {
            line(&Record::Latency(l))?;
        }
    }
    if sel.ratings {
        for r in &out.pki_view {
            line(&Record::Ratings(r))?;
        }
    }
    line(&Record::Summary(&out.summary))
}
