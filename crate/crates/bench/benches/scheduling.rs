use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use gainsched_core::{
    approximate_gain, greedy_gain_select, random_task, run, sample_batch, stochastic_gradient,
    GainMode, ModelState, PolicyConfig, RngStream, SimConfig, TaskSpec,
};

fn gain_estimate(c: &mut Criterion) {
    let mut group = c.benchmark_group("approximate_gain");
    for &(dim, n) in &[(2usize, 20usize), (16, 100), (64, 1000)] {
        let mut rng = RngStream::new(1, 0);
        let task = random_task(dim, 1.0, &mut rng).unwrap();
        let batch = sample_batch(&task, n, &mut rng).unwrap();
        let w = ModelState::zeros(dim);
        group.bench_with_input(BenchmarkId::from_parameter(format!("n{dim}_N{n}")), &batch, |b, batch| {
            b.iter(|| {
                let g = stochastic_gradient(batch, &w).unwrap();
                black_box(approximate_gain(batch, &g, 0.01).unwrap())
            })
        });
    }
    group.finish();
}

fn greedy_select(c: &mut Criterion) {
    let gains: Vec<f64> = (0..1000).map(|i| ((i * 7919) % 1000) as f64 * -0.01).collect();
    c.bench_function("greedy_gain_select_m1000_p10", |b| {
        b.iter(|| black_box(greedy_gain_select(&gains, 10).unwrap()))
    });
}

fn simulate(c: &mut Criterion) {
    let task = TaskSpec::setup_a(1.0).unwrap();
    let config = SimConfig::new(
        vec![task.clone(), task],
        0.2,
        5,
        20,
        PolicyConfig::greedy(1, GainMode::Estimated),
        42,
    );
    c.bench_function("run_two_tasks_K20", |b| b.iter(|| black_box(run(&config).unwrap())));
}

criterion_group!(benches, gain_estimate, greedy_select, simulate);
criterion_main!(benches);
