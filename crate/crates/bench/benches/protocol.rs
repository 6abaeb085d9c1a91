use std::sync::Arc;

use criterion::{black_box, criterion_group, criterion_main, BatchSize, BenchmarkId, Criterion};
use echomix::bacap::{generate_write_cap, open, seal, verify, Capability, Context};
use echomix::crypto::{X25519Kem, X25519Nike};
use echomix::mixsim::{self, ScenarioConfig};
use echomix::sphinx::{Hop, NodeKey, PathSpec, Sphinx, Terminal};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn bacap(c: &mut Criterion) {
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    let cap = generate_write_cap(&mut rng);
    let ctx = Context::from_public_value(b"bench");
    let keys = cap.box_keys(&ctx).unwrap();
    let msg = vec![7u8; 1024];
    let sealed = seal(&keys, &cap, &msg).unwrap();
    let mut g = c.benchmark_group("bacap");
    g.bench_function("derive_box_keys", |b| b.iter(|| cap.box_keys(black_box(&ctx)).unwrap()));
    g.bench_function("seal_1KiB", |b| b.iter(|| seal(&keys, &cap, black_box(&msg)).unwrap()));
    g.bench_function("verify", |b| b.iter(|| verify(black_box(&sealed))));
    g.bench_function("open_1KiB", |b| b.iter(|| open(&keys, black_box(&sealed)).unwrap()));
    g.finish();
}

fn sphinx(c: &mut Criterion) {
    let mut g = c.benchmark_group("sphinx");
    let suites = [
        ("nike", Sphinx::new_nike(Arc::new(X25519Nike), 5, 2048)),
        ("kem", Sphinx::new_kem(Arc::new(X25519Kem), 5, 2048)),
    ];
    for (name, s) in &suites {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let keys: Vec<NodeKey> = (0..5).map(|_| s.generate_node_key(&mut rng)).collect();
        let path = PathSpec {
            hops: keys
                .iter()
                .map(|k| Hop {
                    id: rng.gen(),
                    public_key: k.public().to_vec(),
                    delay_millis: 0,
                })
                .collect(),
            terminal: Terminal::Deliver { recipient: [1; 64] },
        };
        let body = vec![0u8; 2048];
        g.bench_with_input(BenchmarkId::new("wrap_5_hops", name), &path, |b, p| {
            b.iter(|| s.wrap(p, &body, &mut rng).unwrap())
        });
        let packet = s.wrap(&path, &body, &mut rng).unwrap();
        g.bench_with_input(BenchmarkId::new("unwrap_hop", name), &packet, |b, p| {
            b.iter_batched(|| p.clone(), |p| s.unwrap(&keys[0], &p, None).unwrap(), BatchSize::SmallInput)
        });
    }
    g.finish();
}

fn simulator(c: &mut Criterion) {
    let mut cfg = ScenarioConfig::bundled("echomix-baseline").unwrap();
    cfg.duration_s = 5.0;
    cfg.output.observations = false;
    let mut g = c.benchmark_group("mixsim");
    g.sample_size(10);
    g.bench_function("baseline_5s", |b| b.iter(|| mixsim::run(black_box(&cfg)).unwrap()));
    g.finish();
}

criterion_group!(benches, bacap, sphinx, simulator);
criterion_main!(benches);
