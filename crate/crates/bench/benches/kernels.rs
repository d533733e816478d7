use std::hint::black_box;

use bogcn::acquisition::{expected_improvement, pareto_front};
use bogcn::bench::{generate_bench, SyntheticBenchSpec, TabularOracle};
use bogcn::blr::{fit_logit_targets, optimize_hyperparams_logit, HyperSearch};
use bogcn::search::{initialize, step, SearchSpace};
use bogcn::surrogate::{GcnConfig, GcnParams, Surrogate, TrainConfig};
use bogcn::{ObjectiveSpec, ObjectiveVector, SearchConfig};
use criterion::{criterion_group, criterion_main, BatchSize, Criterion};

/// Deterministic pseudo-random values in (-1, 1).
fn wave(i: usize) -> f64 {
    ((i as f64 * 12.9898).sin() * 43758.5453).fract()
}

fn gcn(c: &mut Criterion) {
    let bench = generate_bench(&SyntheticBenchSpec { space_size: 256, ..SyntheticBenchSpec::default() }).unwrap();
    let space = SearchSpace::from_records(&bench.records, bench.vocab.clone()).unwrap();
    let params = GcnParams::new(GcnConfig::new(bench.vocab.feature_width()), 0).unwrap();
    let one = space.encoded(0);
    let batch: Vec<_> = (0..128).map(|i| space.encoded(i)).collect();

    c.bench_function("gcn_embed_single", |b| b.iter(|| params.embed(black_box(one)).unwrap()));
    c.bench_function("gcn_forward_batch_128", |b| b.iter(|| params.forward_batch(black_box(&batch)).unwrap()));
    c.bench_function("gcn_gradient_batch_128", |b| {
        let mut grad = vec![0.0; params.params().len()];
        b.iter(|| params.logits_and_grad(&batch, &mut |l| vec![1.0; l.len()], &mut grad).unwrap())
    });
}

fn blr(c: &mut Criterion) {
    let (n, d) = (300, 64);
    let phi: Vec<Vec<f64>> = (0..n).map(|i| (0..d).map(|j| wave(i * d + j)).collect()).collect();
    let z: Vec<f64> = (0..n).map(|i| 2.0 * wave(7 * i + 3)).collect();
    c.bench_function("blr_fit_300x64", |b| b.iter(|| fit_logit_targets(black_box(&phi), &z, 1.0, 10.0).unwrap()));
    c.bench_function("blr_evidence_search_300x64", |b| {
        b.iter(|| optimize_hyperparams_logit(black_box(&phi), &z, HyperSearch::default()).unwrap())
    });
}

fn acquisition(c: &mut Criterion) {
    let grid: Vec<(f64, f64)> = (0..10_000).map(|i| (3.0 * wave(i), 1.0 + wave(i + 10_000).abs())).collect();
    c.bench_function("ei_10k", |b| {
        b.iter(|| grid.iter().map(|&(mu, var)| expected_improvement(mu, var, 0.5).unwrap()).sum::<f64>())
    });
    let spec = ObjectiveSpec::parse("a:max,b:min").unwrap();
    let points: Vec<ObjectiveVector> = (0..1000).map(|i| ObjectiveVector(vec![wave(2 * i), wave(2 * i + 1)])).collect();
    c.bench_function("pareto_front_1000x2", |b| b.iter(|| pareto_front(black_box(&points), &spec).unwrap()));
}

fn search_step(c: &mut Criterion) {
    let bench = generate_bench(&SyntheticBenchSpec { space_size: 2000, ..SyntheticBenchSpec::default() }).unwrap();
    let oracle = TabularOracle::new(&bench.records, ObjectiveSpec::single("accuracy")).unwrap();
    let space = SearchSpace::from_records(&bench.records, bench.vocab.clone()).unwrap();
    let cfg = SearchConfig {
        retrain: TrainConfig { max_epochs: 20, patience: 5, ..TrainConfig::default() },
        ..SearchConfig::default()
    };
    let state = initialize(&cfg, &oracle, &space).unwrap();
    let mut group = c.benchmark_group("search");
    group.sample_size(20);
    group.bench_function("step_2000_cells", |b| {
        b.iter_batched(|| state.clone(), |mut s| step(&cfg, &mut s, &oracle, &space).unwrap(), BatchSize::LargeInput)
    });
    group.finish();
}

criterion_group!(benches, gcn, blr, acquisition, search_step);
criterion_main!(benches);
