use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use varbpr::data::{compute_signals, InteractionLog, Record, SignalBuffer, SplitBundle};
use varbpr::eval::{likelihood_probe, rank_topk};
use varbpr::model::EmbeddingModel;
use varbpr::par::Executor;
use varbpr::train::{train_with, LossKind, TrainConfig};

/// Roughly ML-100K shaped: 900 users, 1600 items, ~60 positives each.
fn synthetic() -> (SplitBundle, SignalBuffer) {
    let (users, items) = (900usize, 1600usize);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut records = Vec::new();
    let mut train = vec![Vec::new(); users];
    let mut test = vec![Vec::new(); users];
    for u in 0..users {
        for i in 0..items {
            if rng.random_bool(0.05) {
                records.push(Record {
                    user: u as u32,
                    item: i as u32,
                    rating: Some(4.0),
                    timestamp: None,
                });
                if rng.random_bool(0.25) {
                    test[u].push(i as u32)
                } else {
                    train[u].push(i as u32)
                }
            }
        }
    }
    let log = InteractionLog::from_dense(users, items, records).unwrap();
    let bundle = SplitBundle {
        user_count: users,
        item_count: items,
        train,
        test,
        dropped_users: 0,
        injected: vec![],
    };
    let signals = compute_signals(&bundle, &log);
    (bundle, signals)
}

fn executors() -> Vec<(&'static str, Executor)> {
    let n = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1).max(2);
    vec![("sequential", Executor::sequential()), ("parallel", Executor::new(n))]
}

fn bench_eval(c: &mut Criterion) {
    let (bundle, _) = synthetic();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let model = EmbeddingModel::random(bundle.user_count, bundle.item_count, 64, 0.1, &mut rng).unwrap();
    let mut g = c.benchmark_group("eval");
    g.sample_size(10);
    for (name, exec) in executors() {
        g.bench_with_input(BenchmarkId::new("rank_top20", name), &exec, |b, exec| {
            b.iter(|| black_box(rank_topk(&model, &bundle, 20, exec).unwrap()))
        });
        g.bench_with_input(BenchmarkId::new("likelihood_probe", name), &exec, |b, exec| {
            b.iter(|| black_box(likelihood_probe(&model, &bundle, 100, 3, exec).unwrap()))
        });
    }
    g.finish();
}

fn bench_train(c: &mut Criterion) {
    let (bundle, signals) = synthetic();
    let mut g = c.benchmark_group("train_epoch");
    g.sample_size(10);
    for (name, exec) in executors() {
        let cfg = TrainConfig {
            loss: LossKind::Varbpr,
            epochs: 1,
            batch_size: 64,
            threads: exec.threads(),
            ..TrainConfig::default()
        };
        g.bench_function(BenchmarkId::new("varbpr_batch64", name), |b| {
            b.iter(|| black_box(train_with(&cfg, None, &bundle, &signals, &exec, &mut |_| {}).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, bench_eval, bench_train);
criterion_main!(benches);
