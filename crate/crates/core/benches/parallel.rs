use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use pgrank::data::{build_training_candidates, generate_synthetic, Stage1, SyntheticConfig};
use pgrank::estimator::{repeated_estimates, EstimatorKind};
use pgrank::metrics::Metric;
use pgrank::parallel::Executor;
use pgrank::plackett_luce::sample_gumbel;
use pgrank::rng;
use pgrank::scoring::ScorerParams;
use pgrank::trainer::{batch_gradient, TrainConfig};

fn executors() -> Vec<(&'static str, Executor)> {
    let mut v = vec![("sequential", Executor::sequential())];
    let par = Executor::threads(0);
    if par.is_parallel() {
        v.push(("parallel", par));
    }
    v
}

fn batch_gradients(c: &mut Criterion) {
    let corpus = generate_synthetic(&SyntheticConfig {
        num_queries: 64,
        ..SyntheticConfig::default()
    })
    .unwrap();
    let pool =
        build_training_candidates(&corpus, &Stage1::RawDot, 100, &Executor::sequential()).unwrap();
    let sets = pool.candidate_sets(&corpus).unwrap();
    let config = TrainConfig {
        learning_rate: 1e-3,
        ..TrainConfig::default()
    };
    let params = ScorerParams::init(config.architecture(corpus.dim()), 0).unwrap();
    let batch: Vec<_> = sets.iter().collect();
    let mut group = c.benchmark_group("batch_gradient_64x100");
    for (name, exec) in executors() {
        group.bench_function(name, |b| {
            b.iter(|| batch_gradient(&params, &batch, &config, &[1, 0], &exec).unwrap())
        });
    }
    group.finish();
}

fn repeated(c: &mut Criterion) {
    let corpus = generate_synthetic(&SyntheticConfig {
        num_queries: 1,
        ..SyntheticConfig::default()
    })
    .unwrap();
    let pool =
        build_training_candidates(&corpus, &Stage1::RawDot, 100, &Executor::sequential()).unwrap();
    let cs = &pool.candidate_sets(&corpus).unwrap()[0];
    let params = ScorerParams::init(TrainConfig::default().architecture(corpus.dim()), 0).unwrap();
    let mut group = c.benchmark_group("repeated_estimates_200");
    for (name, exec) in executors() {
        group.bench_function(name, |b| {
            b.iter(|| {
                repeated_estimates(
                    EstimatorKind::Positionwise,
                    &params,
                    cs,
                    Metric::Ndcg(10),
                    8,
                    0.05,
                    200,
                    1,
                    &exec,
                )
                .unwrap()
            })
        });
    }
    group.finish();
}

fn sampling(c: &mut Criterion) {
    let mut group = c.benchmark_group("gumbel_sample");
    for n in [1000usize, 2000] {
        let scores: Vec<f64> = (0..n)
            .map(|i| ((i * 7919) % 1000) as f64 / 1000.0)
            .collect();
        let mut r = rng::seeded(3);
        group.bench_with_input(BenchmarkId::from_parameter(n), &scores, |b, s| {
            b.iter(|| sample_gumbel(s, 0.05, &mut r).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, batch_gradients, repeated, sampling);
criterion_main!(benches);
