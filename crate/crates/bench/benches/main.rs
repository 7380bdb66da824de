use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use ermf::graph::sample_er;
use ermf::measure::{w1, EmpiricalMeasure};
use ermf::model::{builtin_model, Geometry, ModelSpec};
use ermf::pde::{solve_mckean_vlasov, DensityGrid, GridDomain, PdeConfig, Scheme};
use ermf::rng;
use ermf::sde::{simulate_coupled, SimConfig};

fn kuramoto() -> ModelSpec {
    let params: BTreeMap<String, f64> =
        [("coupling".to_string(), 1.0), ("noise".to_string(), 1.0)].into_iter().collect();
    builtin_model("kuramoto", &params).unwrap()
}

fn bench_graph_sampling(c: &mut Criterion) {
    let mut g = c.benchmark_group("graph");
    g.sample_size(20);
    g.bench_function("sample_er_n5000_p0.01", |b| {
        b.iter(|| sample_er(black_box(5000), black_box(0.01), 42).unwrap())
    });
    g.finish();
}

fn bench_coupled_steps(c: &mut Criterion) {
    let model = kuramoto();
    let n = 2000;
    let p = 2.0 * (n as f64).ln() / n as f64;
    let graph = sample_er(n, p, 7).unwrap();
    let init: Vec<f64> = (0..n).map(|i| i as f64 / n as f64 * TAU).collect();
    let cfg = SimConfig {
        store_stride: 1000,
        ..SimConfig::new(n, 1e-3, 0.05, 3)
    };
    let mut g = c.benchmark_group("sde");
    g.sample_size(10);
    g.bench_function("coupled_50_steps_n2000", |b| {
        b.iter(|| simulate_coupled(&model, &graph, &init, &cfg).unwrap())
    });
    g.finish();
}

fn bench_w1(c: &mut Criterion) {
    let n = 10_000;
    let geometry = Geometry::Circle { period: TAU };
    let a: Vec<f64> = (0..n).map(|k| TAU * rng::uniform(rng::hash3(1, k as u64, 0))).collect();
    let b: Vec<f64> = (0..n).map(|k| TAU * rng::uniform(rng::hash3(2, k as u64, 0))).collect();
    let ea = EmpiricalMeasure::new(a, geometry).unwrap();
    let eb = EmpiricalMeasure::new(b, geometry).unwrap();
    c.bench_function("w1_circle_n10000", |bch| bch.iter(|| w1(&ea, &eb).unwrap()));
}

fn bench_pde_steps(c: &mut Criterion) {
    let model = kuramoto();
    let mu0 = DensityGrid::from_fn(GridDomain::Circle { period: TAU }, 1024, |x| {
        (2.0 * x.cos()).exp()
    })
    .unwrap();
    let cfg = PdeConfig::new(1024, 2e-5, 2e-3, Scheme::ExplicitUpwind);
    let mut g = c.benchmark_group("pde");
    g.sample_size(10);
    g.bench_function("fv_100_steps_m1024", |b| {
        b.iter(|| solve_mckean_vlasov(&model, &mu0, &cfg).unwrap())
    });
    g.finish();
}

criterion_group!(benches, bench_graph_sampling, bench_coupled_steps, bench_w1, bench_pde_steps);
criterion_main!(benches);
