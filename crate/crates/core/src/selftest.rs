//! Fixed-seed statistical self checks with optional fault injection.
//!
//! Each check reproduces one statistical property of the system from a
//! fixed seed. Injecting a fault perturbs only the named check's input, so a
//! correct harness reports exactly that check as failed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::bacap::{generate_write_cap, Capability, Context};
use crate::mixsim::{
    bacap_destination, chain_latencies, coupon_draws, destination_uniformity, rtt_distribution, CouplingMux,
    Destination, Selection,
};
use crate::pigeonhole::{ReplicaDescriptor, ReplicaId, ShardMap};
use crate::stats::{binomial_z, ks_one_sample, mean};

pub const DEFAULT_SEED: u64 = 0x5e1f_7e57;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Check {
    Coupling,
    Erlang,
    Coupon,
    Unlinkability,
    Sharding,
}

impl Check {
    pub const ALL: [Check; 5] = [
        Check::Coupling,
        Check::Erlang,
        Check::Coupon,
        Check::Unlinkability,
        Check::Sharding,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Check::Coupling => "coupling",
            Check::Erlang => "erlang",
            Check::Coupon => "coupon",
            Check::Unlinkability => "unlinkability",
            Check::Sharding => "sharding",
        }
    }

    pub fn from_name(s: &str) -> Option<Check> {
        Check::ALL.into_iter().find(|c| c.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub check: Check,
    pub passed: bool,
    pub detail: String,
}

/// Runs every check; `fault` perturbs the input of one of them.
pub fn run_all(seed: u64, fault: Option<Check>) -> Vec<Verdict> {
    Check::ALL.iter().map(|&c| run_check(c, seed, fault == Some(c))).collect()
}

pub fn run_check(check: Check, seed: u64, faulty: bool) -> Verdict {
    let (passed, detail) = match check {
        Check::Coupling => coupling(seed, faulty),
        Check::Erlang => erlang(seed, faulty),
        Check::Coupon => coupon(seed, faulty),
        Check::Unlinkability => unlinkability(seed, faulty),
        Check::Sharding => sharding(seed, faulty),
    };
    Verdict { check, passed, detail }
}

fn rng(seed: u64, label: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed ^ label.wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

/// Five selection algorithms over BACAP-derived destinations stay uniform;
/// the fault pins application traffic to one service.
fn coupling(seed: u64, faulty: bool) -> (bool, String) {
    const SERVICES: u32 = 10;
    const N: usize = 100_000;
    let mut r = rng(seed, 1);
    let cursor = generate_write_cap(&mut r).cursor(Context::from_public_value(b"selftest/coupling"));
    let boxes: Vec<u32> = cursor
        .take(N / 2 + 1_000)
        .map(|k| bacap_destination(&k.box_id.to_bytes(), SERVICES))
        .collect();
    let mut next_box = boxes.iter().cycle();
    let algos = [
        Selection::AppFirst,
        Selection::Alternate,
        Selection::HistoryDependent,
        Selection::Batch { size: 8 },
        Selection::Coin { p: 0.3 },
    ];
    let mut worst = 1.0f64;
    for sel in algos {
        let mut mux = CouplingMux::new(SERVICES, sel, !faulty);
        let mut out = Vec::with_capacity(N);
        for _ in 0..N {
            if r.gen_bool(0.5) {
                let d = if faulty {
                    Destination::Fixed(0)
                } else {
                    Destination::Pseudorandom(*next_box.next().expect("cycle"))
                };
                mux.push(d).expect("in range");
            }
            out.push(mux.next(&mut r));
        }
        worst = worst.min(destination_uniformity(&out, SERVICES).p_value);
    }
    (worst > 0.01, format!("min p over 5 selection algorithms = {worst:.4}"))
}

/// 9-hop chain at rate 5/s against the Erlang(9, 5) law; the fault runs
/// the chain at rate 4/s.
fn erlang(seed: u64, faulty: bool) -> (bool, String) {
    let lambda = 5.0;
    let run_lambda = if faulty { 4.0 } else { lambda };
    let xs = chain_latencies(9, run_lambda, 100_000, seed).expect("valid rate");
    let e = rtt_distribution(9, lambda).expect("valid");
    let m = mean(&xs);
    let tail = xs.iter().filter(|&&x| x > 4.0).count() as f64 / xs.len() as f64;
    let ks = ks_one_sample(&xs, |x| e.cdf(x));
    let ok = (m / e.mean() - 1.0).abs() < 0.01 && (0.0013..=0.0028).contains(&tail) && ks.passes(0.01);
    (ok, format!("mean {m:.4} s, P(>4 s) {tail:.5}, KS p {:.4}", ks.p_value))
}

/// Mean coupon-collector draws for 10 coupons; the fault collects 9.
fn coupon(seed: u64, faulty: bool) -> (bool, String) {
    let n = if faulty { 9 } else { 10 };
    let mut r = rng(seed, 3);
    let xs: Vec<f64> = (0..10_000).map(|_| coupon_draws(n, &mut r) as f64).collect();
    let expected = 10.0 * crate::stats::harmonic(10);
    let m = mean(&xs);
    ((m / expected - 1.0).abs() < 0.02, format!("mean {m:.3} vs {expected:.3}"))
}

fn hamming(a: &[u8; 32], b: &[u8; 32]) -> u32 {
    a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones()).sum()
}

/// Hamming-distance distinguisher between consecutive box IDs and IDs of
/// independent sequences stays within 2 sigma of chance. The fault feeds the
/// distinguisher a raw shared prefix instead of derived IDs.
fn unlinkability(seed: u64, faulty: bool) -> (bool, String) {
    let mut r = rng(seed, 4);
    let ctx = Context::from_public_value(b"selftest/unlink");
    let trials = 1000u64;
    let mut correct = 0;
    for _ in 0..trials {
        let cap = generate_write_cap(&mut r);
        let mut cur = cap.cursor(ctx);
        let first = cur.next_keys().expect("derivable").box_id.to_bytes();
        let same = r.gen_bool(0.5);
        let mut second = if same {
            cur.next_keys().expect("derivable").box_id.to_bytes()
        } else {
            generate_write_cap(&mut r).box_keys(&ctx).expect("derivable").box_id.to_bytes()
        };
        if faulty && same {
            second[..16].copy_from_slice(&first[..16]);
        }
        if (hamming(&first, &second) < 128) == same {
            correct += 1;
        }
    }
    let z = binomial_z(correct, trials, 0.5);
    (z.abs() < 2.0, format!("distinguisher {correct}/{trials} correct, z {z:.2}"))
}

/// Removing one of ten replicas at k = 2 moves 20% of boxes. The fault
/// removes two.
fn sharding(seed: u64, faulty: bool) -> (bool, String) {
    let mut r = rng(seed, 5);
    let replicas: Vec<ReplicaDescriptor> = (0..10)
        .map(|i| ReplicaDescriptor {
            id: ReplicaId(i),
            identity_key: r.gen(),
        })
        .collect();
    let map = ShardMap::new(replicas, 2).expect("k <= n");
    let mut smaller = map.without(ReplicaId(3)).expect("n > k");
    if faulty {
        smaller = smaller.without(ReplicaId(7)).expect("n > k");
    }
    let n = 20_000;
    let moved = (0..n)
        .filter(|_| {
            let id: [u8; 32] = r.gen();
            let (mut a, mut b) = (map.select(&id), smaller.select(&id));
            a.sort();
            b.sort();
            a != b
        })
        .count();
    let frac = moved as f64 / n as f64;
    ((frac - 0.2).abs() < 0.02, format!("reassigned fraction {frac:.4}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_seed_passes_every_check() {
        for v in run_all(DEFAULT_SEED, None) {
            assert!(v.passed, "{v:?}");
        }
    }

    #[test]
    fn each_fault_fails_its_check() {
        for c in Check::ALL {
            let v = run_check(c, DEFAULT_SEED, true);
            assert!(!v.passed, "{v:?}");
        }
    }

    #[test]
    fn names_round_trip() {
        for c in Check::ALL {
            assert_eq!(Check::from_name(c.name()), Some(c));
        }
        assert_eq!(Check::from_name("nope"), None);
    }
}
