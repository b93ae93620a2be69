//! Compares the rayon data-parallel path against the sequential fallback on
//! the three per-sample workloads: dataset synthesis, batch gradient
//! accumulation, and evaluation forward passes.
//!
//! The default build carries the `parallel` feature, so `par::map_*` fans out
//! over rayon while `par::map_*_seq` stays on one thread; building with
//! `--no-default-features` makes both paths identical.

use std::time::Duration;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use avoss::mixsim::dataset::{derive_seed, synthesize_sample, IdRange};
use avoss::mixsim::{MixSpec, MixtureSample};
use avoss::model::{Model, ModelConfig};
use avoss::par;
use avoss::train::sample_loss_and_grads;

fn bench_spec() -> MixSpec {
    MixSpec {
        window_s: 1.0,
        off_duration_range_s: [0.5, 1.0],
        vad_window_len: 64,
        vad_hop: 32,
        seed: 99,
        ..MixSpec::default()
    }
}

fn bench_model() -> Model {
    let mut cfg = ModelConfig::desk();
    cfg.window_len = 64;
    cfg.hop = 32;
    cfg.tcn_layers_per_block = 2;
    Model::new(cfg, 1).unwrap()
}

fn make_batch(n: usize) -> Vec<MixtureSample> {
    let spec = bench_spec();
    par::map_range(n, |i| {
        synthesize_sample(&spec, 8, &IdRange::new(0, 16), &IdRange::new(0, 8), i, derive_seed(7, i as u64))
            .unwrap()
    })
}

fn synthesis(c: &mut Criterion) {
    let spec = bench_spec();
    let speakers = IdRange::new(0, 16);
    let noises = IdRange::new(0, 8);
    let mut group = c.benchmark_group("dataset_synthesis");
    group.sample_size(10).measurement_time(Duration::from_secs(8));
    {
        let n = 8usize;
        group.bench_function(BenchmarkId::new("parallel", n), |b| {
            b.iter(|| {
                par::map_range(n, |i| {
                    synthesize_sample(&spec, 8, &speakers, &noises, i, derive_seed(7, i as u64))
                        .unwrap()
                        .mix
                        .len()
                })
            })
        });
        group.bench_function(BenchmarkId::new("sequential", n), |b| {
            b.iter(|| {
                par::map_range_seq(n, |i| {
                    synthesize_sample(&spec, 8, &speakers, &noises, i, derive_seed(7, i as u64))
                        .unwrap()
                        .mix
                        .len()
                })
            })
        });
    }
    group.finish();
}

fn batch_gradients(c: &mut Criterion) {
    let model = bench_model();
    let batch = make_batch(4);
    let mut group = c.benchmark_group("batch_gradients");
    group.sample_size(10).measurement_time(Duration::from_secs(20));
    group.bench_function("parallel", |b| {
        b.iter(|| {
            par::map_indexed(&batch, |_, s| {
                sample_loss_and_grads(&model, s, 0.0).unwrap().0
            })
        })
    });
    group.bench_function("sequential", |b| {
        b.iter(|| {
            par::map_indexed_seq(&batch, |_, s| {
                sample_loss_and_grads(&model, s, 0.0).unwrap().0
            })
        })
    });
    group.finish();
}

fn evaluation_forwards(c: &mut Criterion) {
    let model = bench_model();
    let batch = make_batch(8);
    let mut group = c.benchmark_group("evaluation_forwards");
    group.sample_size(10).measurement_time(Duration::from_secs(15));
    group.bench_function("parallel", |b| {
        b.iter(|| {
            par::map_indexed(&batch, |_, s| {
                model
                    .forward(&s.mix, Some(&s.lip_features), Some(&s.enrollment))
                    .unwrap()
                    .est
                    .len()
            })
        })
    });
    group.bench_function("sequential", |b| {
        b.iter(|| {
            par::map_indexed_seq(&batch, |_, s| {
                model
                    .forward(&s.mix, Some(&s.lip_features), Some(&s.enrollment))
                    .unwrap()
                    .est
                    .len()
            })
        })
    });
    group.finish();
}

criterion_group!(benches, synthesis, batch_gradients, evaluation_forwards);
criterion_main!(benches);
