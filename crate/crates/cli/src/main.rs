//! `echomix`: simulate scenarios, print packet geometry and bandwidth, run
//! the statistical self checks.
//!
//! Exit codes: 0 success, 1 invariant or check failure, 2 usage or
//! configuration error.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use echomix::crypto::catalog::{SuiteKind, CATALOG};
use echomix::mixsim::{self, MixsimError, RecordSelection, ScenarioConfig};
use echomix::selftest::{self, Check};
use echomix::sphinx::{self, SphinxGeometry, REFERENCE_MAX_HOPS};
use serde_json::json;

/// Receiver-provider z-score above which the last-hop distinguisher
/// declares the receiver found.
const DETECTION_Z: f64 = 4.0;

#[derive(Parser)]
#[command(name = "echomix", version, about = "Echomix protocol workbench")]
struct Cli {
    /// Emit line-delimited JSON instead of tables.
    #[arg(long, global = true)]
    records: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a mixnet scenario and report traffic statistics.
    Simulate {
        /// Scenario TOML path, or the name of a bundled scenario.
        #[arg(long)]
        config: String,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Write the full JSONL trace here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print Sphinx header sizes for NIKE and KEM suites.
    Geometry {
        /// Suite name; all catalogued suites when omitted.
        #[arg(long)]
        suite: Option<String>,
        #[arg(long, default_value_t = REFERENCE_MAX_HOPS)]
        hops: usize,
        /// Payload bytes per packet.
        #[arg(long, default_value_t = 30_000)]
        payload: usize,
    },
    /// Client traffic at a constant packet rate.
    Bandwidth {
        /// Packets per second.
        #[arg(long, default_value_t = 2.5)]
        rate: f64,
        #[arg(long, default_value = "X25519")]
        suite: String,
        #[arg(long, value_enum, default_value_t = Kind::Nike)]
        kind: Kind,
        #[arg(long, default_value_t = REFERENCE_MAX_HOPS)]
        hops: usize,
        #[arg(long, default_value_t = 30_000)]
        payload: usize,
    },
    /// Run the fixed-seed statistical checks.
    Selftest {
        #[arg(long, default_value_t = selftest::DEFAULT_SEED)]
        seed: u64,
        /// Perturb one check's input; that check must then fail.
        #[arg(long)]
        fault: Option<String>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Nike,
    Kem,
}

impl From<Kind> for SuiteKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Nike => SuiteKind::Nike,
            Kind::Kem => SuiteKind::Kem,
        }
    }
}

enum Failure {
    Check(String),
    Usage(String),
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Usage(format!("i/o error: {e}"))
    }
}

impl From<MixsimError> for Failure {
    fn from(e: MixsimError) -> Self {
        match e {
            MixsimError::ContractViolation(_) => Failure::Check(e.to_string()),
            _ => Failure::Usage(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let stdout = io::stdout();
    let mut w = BufWriter::new(stdout.lock());
    let res = match cli.cmd {
        Cmd::Simulate { config, seed, out } => simulate(&config, seed, out.as_deref(), cli.records, &mut w),
        Cmd::Geometry { suite, hops, payload } => geometry(suite.as_deref(), hops, payload, cli.records, &mut w),
        Cmd::Bandwidth {
            rate,
            suite,
            kind,
            hops,
            payload,
        } => bandwidth(rate, &suite, kind.into(), hops, payload, cli.records, &mut w),
        Cmd::Selftest { seed, fault } => run_selftest(seed, fault.as_deref(), cli.records, &mut w),
    };
    let flushed = w.flush();
    match res.and(flushed.map_err(Failure::from)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check(m)) => {
            eprintln!("echomix: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(m)) => {
            eprintln!("echomix: {m}");
            ExitCode::from(2)
        }
    }
}

fn load_config(spec: &str) -> Result<ScenarioConfig, Failure> {
    let path = Path::new(spec);
    if path.exists() {
        let text = std::fs::read_to_string(path)?;
        return Ok(ScenarioConfig::from_toml(&text)?);
    }
    ScenarioConfig::bundled(spec).ok_or_else(|| {
        let names: Vec<&str> = mixsim::BUNDLED.iter().map(|(n, _)| *n).collect();
        Failure::Usage(format!(
            "no file or bundled scenario named `{spec}` (bundled: {})",
            names.join(", ")
        ))
    })
}

fn line(w: &mut impl Write, v: serde_json::Value) -> io::Result<()> {
    writeln!(w, "{v}")
}

fn simulate(
    config: &str,
    seed: Option<u64>,
    out: Option<&Path>,
    records: bool,
    w: &mut impl Write,
) -> Result<(), Failure> {
    let mut cfg = load_config(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let sim = mixsim::run(&cfg)?;
    if let Some(p) = out {
        let mut f = BufWriter::new(File::create(p)?);
        mixsim::write_jsonl(&sim, RecordSelection::default(), &mut f)?;
        f.flush()?;
    }
    let s = &sim.summary;
    let last_hop = mixsim::gpa_last_hop_test(&sim);
    let coverage = mixsim::link_coverage(&sim, 1.0);
    let detected = last_hop.receiver_z.map(|z| z > DETECTION_Z);
    if records {
        line(w, json!({"type": "summary", "summary": s}))?;
        line(w, json!({"type": "last-hop", "report": last_hop, "detected": detected}))?;
        line(w, json!({"type": "coverage", "report": coverage}))?;
    } else {
        let dropped: u64 = s.dropped.values().sum();
        let kinds: Vec<String> = s.emitted.iter().map(|(k, n)| format!("{} {n}", kind_name(k))).collect();
        writeln!(w, "{:<34} {} ({:?}, seed {})", "scenario", s.name, s.mode, s.seed)?;
        writeln!(w, "{:<34} {:.3}", "simulated time (s)", s.end_s)?;
        writeln!(w, "{:<34} {} ({})", "packets emitted (pkt)", s.emitted_total, kinds.join(", "))?;
        writeln!(w, "{:<34} {} / {} / {}", "delivered / dropped / in flight", s.delivered, dropped, s.in_flight)?;
        writeln!(w, "{:<34} {}", "conserved", yes(s.conserved))?;
        writeln!(w, "{:<34} {} ({} B)", "uniform wire size", yes(s.wire_uniform), s.packet_size)?;
        writeln!(w, "{:<34} {}", "echo round trips (pkt)", s.echo_rtt.count)?;
        writeln!(w, "{:<34} {:.4}", "mean RTT (s)", s.echo_rtt.mean_s)?;
        writeln!(w, "{:<34} {:.4}", "RTT std dev (s)", s.echo_rtt.std_s)?;
        writeln!(w, "{:<34} {:.5}", "P(RTT > 20 mean hop delays)", s.echo_rtt.frac_over_20mu)?;
        writeln!(
            w,
            "{:<34} {:.2}",
            "coupon bound (pkt/window/gateway)", s.coupon_bound.per_gateway_per_mu
        )?;
        writeln!(w, "{:<34} {:.2}", "gateway decoy rate (pkt/s)", s.gateway_decoy_rate_per_s)?;
        writeln!(
            w,
            "{:<34} {:.4} / {:.4}",
            "link coverage per-link min / all", coverage.per_link_min, coverage.all_links
        )?;
        writeln!(w, "{:<34} {:.2}", "last-hop max |z|", last_hop.max_abs_z)?;
        if let (Some(r), Some(z)) = (last_hop.receiver, last_hop.receiver_z) {
            let verdict = if z > DETECTION_Z { "DETECTED" } else { "not detected" };
            writeln!(w, "{:<34} {r} z = {z:.2} ({verdict})", "receiver provider")?;
        }
    }
    if !s.conserved || !s.wire_uniform {
        return Err(Failure::Check("simulation invariant violated".into()));
    }
    Ok(())
}

fn kind_name(k: &mixsim::PacketKind) -> String {
    serde_json::to_value(k)
        .ok()
        .and_then(|v| v.as_str().map(str::to_owned))
        .unwrap_or_default()
}

fn yes(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "NO"
    }
}

fn geometry(suite: Option<&str>, hops: usize, payload: usize, records: bool, w: &mut impl Write) -> Result<(), Failure> {
    if hops == 0 {
        return Err(Failure::Usage("--hops must be at least 1".into()));
    }
    let rows: Vec<SphinxGeometry> = CATALOG
        .iter()
        .filter(|s| suite.map_or(true, |n| s.name.eq_ignore_ascii_case(n)))
        .map(|s| SphinxGeometry::from_sizes(s, hops, payload))
        .collect();
    if rows.is_empty() {
        let names: Vec<&str> = CATALOG.iter().map(|s| s.name).collect();
        return Err(Failure::Usage(format!(
            "unknown suite `{}` (known: {})",
            suite.unwrap_or_default(),
            names.join(", ")
        )));
    }
    if !records {
        writeln!(
            w,
            "{:<16} {:<5} {:>9} {:>9} {:>9} {:>11} {:>10} {:>17} {:>22} {:>12}",
            "suite",
            "kind",
            "alpha(B)",
            "beta(B)",
            "gamma(B)",
            "header(B)",
            "SURB(B)",
            "header+SURB(B)",
            format!("header+SURB@{}hop(B)", 2 * hops - 1),
            "packet(B)"
        )?;
    }
    for g in &rows {
        let rt = SphinxGeometry::new(g.suite_name.clone(), g.kind, g.alpha_size, 2 * hops - 1, payload);
        if records {
            line(
                w,
                json!({
                    "type": "geometry",
                    "geometry": g,
                    "round_trip_hops": rt.max_hops,
                    "round_trip_header_plus_surb_bytes": rt.header_size + rt.surb_size,
                }),
            )?;
        } else {
            writeln!(
                w,
                "{:<16} {:<5} {:>9} {:>9} {:>9} {:>11} {:>10} {:>17} {:>22} {:>12}",
                g.suite_name,
                match g.kind {
                    SuiteKind::Nike => "NIKE",
                    SuiteKind::Kem => "KEM",
                },
                g.alpha_size,
                g.beta_size,
                g.gamma_size,
                g.header_size,
                g.surb_size,
                g.header_size + g.surb_size,
                rt.header_size + rt.surb_size,
                g.packet_size
            )?;
        }
    }
    Ok(())
}

fn bandwidth(
    rate: f64,
    suite: &str,
    kind: SuiteKind,
    hops: usize,
    payload: usize,
    records: bool,
    w: &mut impl Write,
) -> Result<(), Failure> {
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(Failure::Usage(format!("--rate must be a positive number, got {rate}")));
    }
    if hops == 0 {
        return Err(Failure::Usage("--hops must be at least 1".into()));
    }
    let g = sphinx::geometry(suite, kind, hops, payload)
        .ok_or_else(|| Failure::Usage(format!("unknown suite `{suite}` for {kind:?}")))?;
    let b = sphinx::bandwidth(&g, rate);
    if records {
        line(w, json!({"type": "bandwidth", "suite": g.suite_name, "kind": g.kind, "max_hops": hops, "report": b}))?;
    } else {
        writeln!(w, "{:<26} {} {:?}, {} hops", "suite", g.suite_name, g.kind, hops)?;
        writeln!(w, "{:<26} {:.3}", "rate (pkt/s)", b.packets_per_second)?;
        writeln!(w, "{:<26} {}", "payload (B)", g.payload_size)?;
        writeln!(w, "{:<26} {}", "packet (B)", b.packet_size)?;
        writeln!(w, "{:<26} {:.1}", "throughput (kB/s)", b.bytes_per_second / 1e3)?;
        writeln!(w, "{:<26} {:.3}", "daily volume (GB/day)", b.bytes_per_day / 1e9)?;
        writeln!(w, "{:<26} {:.4}", "payload efficiency", b.payload_efficiency)?;
    }
    Ok(())
}

fn run_selftest(seed: u64, fault: Option<&str>, records: bool, w: &mut impl Write) -> Result<(), Failure> {
    let fault = match fault {
        None => None,
        Some(name) => Some(Check::from_name(name).ok_or_else(|| {
            let names: Vec<&str> = Check::ALL.iter().map(|c| c.name()).collect();
            Failure::Usage(format!("unknown check `{name}` (known: {})", names.join(", ")))
        })?),
    };
    let verdicts = selftest::run_all(seed, fault);
    for v in &verdicts {
        if records {
            line(w, json!({"type": "verdict", "verdict": v}))?;
        } else {
            let tag = if v.passed { "PASS" } else { "FAIL" };
            writeln!(w, "{tag} {:<14} {}", v.check.name(), v.detail)?;
        }
        w.flush()?;
    }
    let failed: Vec<&str> = verdicts.iter().filter(|v| !v.passed).map(|v| v.check.name()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Check(format!("failed checks: {}", failed.join(", "))))
    }
}
