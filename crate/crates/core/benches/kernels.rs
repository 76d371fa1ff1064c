//! Hot kernels at cavity and channel scale.
//!
//! Run once with the default features and once with `--no-default-features`;
//! both land in the same groups, labelled `parallel` and `sequential`.

use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ergosearch::*;

const MODE: &str = if cfg!(feature = "parallel") { "parallel" } else { "sequential" };

fn blob(g: &Arc<Grid2D>) -> ScalarField {
    let b = g.bounds();
    let (c, s) = (Vec2::new(0.4 * b.width(), 0.5 * b.height()) + b.min, 0.1 * b.height());
    normalize(&ScalarField::from_fn(g.clone(), |p| (-(p - c).norm().powi(2) / (2.0 * s * s)).exp())).unwrap()
}

fn channel_grid(h: f64) -> Arc<Grid2D> {
    let edges = RimEdges { left: EdgeKind::Open, right: EdgeKind::Open, ..RimEdges::closed() };
    let bounds = Rect::new(Vec2::ZERO, Vec2::new(16000.0, 6000.0));
    Arc::new(build_grid(bounds, h, &[], edges).unwrap())
}

fn transport(c: &mut Criterion) {
    let mut group = c.benchmark_group("transport_step");
    for n in [100usize, 316] {
        let g = Arc::new(Grid2D::uniform(Vec2::ZERO, 1.0 / n as f64, n, n, RimEdges::closed()).unwrap());
        let flow = cavity_like_flow(g.clone(), 3e-4).unwrap();
        let mut tr = Transport::new(&flow, TransportConfig { diffusion: 1e-6, substeps: 10 }).unwrap();
        let mut m = blob(&g);
        group.bench_with_input(BenchmarkId::new(MODE, n * n), &n, |b, _| {
            b.iter(|| tr.step(black_box(&mut m), 0.0, 0.2).unwrap())
        });
    }
    group.finish();
}

fn coverage(c: &mut Criterion) {
    let mut group = c.benchmark_group("coverage");
    let g = channel_grid(31.0);
    let foot = Footprint::Rect(RectFootprint { mu: 0.75, width: 160.0, height: 90.0 });
    let agents: Vec<AgentState> = (0..5)
        .map(|i| AgentState::new(Vec2::new(4000.0 + 500.0 * i as f64, 3000.0), 0.4 * i as f64, 10.0, 100.0, 50.0, foot).unwrap())
        .collect();
    group.bench_function(BenchmarkId::new(MODE, g.len()), |b| b.iter(|| accumulate_coverage(black_box(&agents), &g)));
    group.finish();
}

fn potential(c: &mut Criterion) {
    let mut group = c.benchmark_group("potential_solve");
    group.sample_size(10);
    for (h, method) in [(50.0, SolverMethod::Direct), (31.0, SolverMethod::Cg)] {
        let g = channel_grid(h);
        let m = blob(&g);
        let cfg = PotentialConfig { method, ..PotentialConfig::new(1e5) };
        let label = format!("{MODE}-{method:?}").to_lowercase();
        // setup plus a cold solve: a warm start would make repeats trivial
        group.bench_function(BenchmarkId::new(label, g.len()), |b| {
            b.iter(|| PotentialSolver::new(g.clone(), cfg).unwrap().solve(black_box(&m)).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, transport, coverage, potential);
criterion_main!(benches);
