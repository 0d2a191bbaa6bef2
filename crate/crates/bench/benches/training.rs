use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use rand::{Rng, SeedableRng};

use ddsgnn_bench::{bench_context, bench_graph};
use ddsgnn_core::autodiff::{Matrix, ParamStore, Tape};
use ddsgnn_core::backbone::{neighborhood_mean, GraphSegments, Polarity};
use ddsgnn_core::metrics::auc;
use ddsgnn_core::train::{epoch_batch, model_spec, training_loss};
use ddsgnn_core::{DdSgnn, ModelConfig, Sign};

fn epoch(c: &mut Criterion) {
    let g = bench_graph(0.25);
    let mut group = c.benchmark_group("epoch_quarter_bitcoin_alpha");
    group.sample_size(10);
    for (name, cfg) in [("sgcn", ModelConfig::default().baseline()), ("dd-sgcn", ModelConfig::default())] {
        let ctx = bench_context(&g, &cfg);
        let mut store = ParamStore::new();
        let model = DdSgnn::init(&mut store, model_spec(&cfg), 0);
        let batch = epoch_batch(&ctx, 1).unwrap();
        group.bench_function(name, |b| {
            b.iter(|| {
                let mut tape = Tape::new();
                let (loss, _) = training_loss(&mut tape, &model, &store, &ctx, &cfg, &batch).unwrap();
                black_box(tape.backward(loss).unwrap());
            })
        });
    }
    group.finish();
}

fn aggregation(c: &mut Criterion) {
    let g = bench_graph(1.0);
    let seg = GraphSegments::new(&g);
    let h = Matrix::filled(g.node_count(), 64, 0.5);
    c.bench_function("positive_neighborhood_mean_full_size", |b| {
        b.iter(|| {
            let mut tape = Tape::new();
            let x = tape.constant(h.clone()).unwrap();
            black_box(neighborhood_mean(&mut tape, &seg, x, Polarity::Positive).unwrap());
        })
    });
}

fn auc_bench(c: &mut Criterion) {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    let n = 5_000;
    let scores: Vec<f64> = (0..n).map(|_| rng.random()).collect();
    let labels: Vec<Sign> = (0..n)
        .map(|_| if rng.random_bool(0.9) { Sign::Positive } else { Sign::Negative })
        .collect();
    c.bench_function("auc_5000", |b| b.iter(|| black_box(auc(&scores, &labels).unwrap())));
}

criterion_group!(benches, epoch, aggregation, auc_bench);
criterion_main!(benches);
