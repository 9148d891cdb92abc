//! Parallel-vs-sequential throughput for the batch hot loops.
//!
//! `par::batch_map` fans out over rayon when the `parallel` feature
//! (default) is on; `par::batch_map_seq` is the fixed sequential baseline.
//! Run with `cargo bench -p stegopurge`, and with
//! `--no-default-features` to confirm the two paths coincide.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use stegopurge::dataset::synth_covers;
use stegopurge::imageio::GrayImage;
use stegopurge::metrics::evaluate_pairs;
use stegopurge::model::{ArchConfig, Generator};
use stegopurge::par;
use stegopurge::purify::{bayes_shrink_denoise, bicubic_purify, purify_with_generator};
use stegopurge::stego::{adaptive_embed, EmbedRate};

fn bench_purify(c: &mut Criterion) {
    let covers = synth_covers(16, 64, 7);

    let mut group = c.benchmark_group("bicubic_purify_batch16_64px");
    group.bench_function(BenchmarkId::new("map", "par"), |b| {
        b.iter(|| par::batch_map(black_box(&covers), |i| bicubic_purify(i).unwrap()))
    });
    group.bench_function(BenchmarkId::new("map", "seq"), |b| {
        b.iter(|| par::batch_map_seq(black_box(&covers), |i| bicubic_purify(i).unwrap()))
    });
    group.finish();

    let mut group = c.benchmark_group("wavelet_denoise_batch16_64px");
    group.bench_function(BenchmarkId::new("map", "par"), |b| {
        b.iter(|| par::batch_map(black_box(&covers), |i| bayes_shrink_denoise(i, 2).unwrap()))
    });
    group.bench_function(BenchmarkId::new("map", "seq"), |b| {
        b.iter(|| par::batch_map_seq(black_box(&covers), |i| bayes_shrink_denoise(i, 2).unwrap()))
    });
    group.finish();
}

fn bench_metrics(c: &mut Criterion) {
    let stegos = synth_covers(16, 64, 11);
    let purified: Vec<GrayImage> = par::batch_map(&stegos, |i| bicubic_purify(i).unwrap());

    // evaluate_pairs parallelizes internally through par::batch_map, so the
    // seq baseline recomputes the same per-image metrics sequentially.
    let mut group = c.benchmark_group("metrics_evaluate_batch16_64px");
    group.bench_function(BenchmarkId::new("evaluate", "par"), |b| {
        b.iter(|| evaluate_pairs(black_box(&stegos), black_box(&purified), "bicubic").unwrap())
    });
    group.bench_function(BenchmarkId::new("evaluate", "seq"), |b| {
        b.iter(|| {
            let rows: Vec<_> = par::batch_map_seq(black_box(&stegos), |s| s.clone())
                .iter()
                .zip(&purified)
                .map(|(s, p)| {
                    (
                        stegopurge::metrics::ber(s, p).unwrap(),
                        stegopurge::metrics::mse(s, p).unwrap(),
                        stegopurge::metrics::ssim(s, p).unwrap(),
                        stegopurge::metrics::uqi(s, p).unwrap(),
                    )
                })
                .collect();
            rows
        })
    });
    group.finish();
}

fn bench_embed(c: &mut Criterion) {
    let covers = synth_covers(16, 64, 13);
    let rate = EmbedRate::new(0.4).unwrap();

    let mut group = c.benchmark_group("adaptive_embed_batch16_64px");
    group.bench_function(BenchmarkId::new("map", "par"), |b| {
        b.iter(|| par::batch_map(black_box(&covers), |i| adaptive_embed(i, rate, 5)))
    });
    group.bench_function(BenchmarkId::new("map", "seq"), |b| {
        b.iter(|| par::batch_map_seq(black_box(&covers), |i| adaptive_embed(i, rate, 5)))
    });
    group.finish();
}

fn bench_generator(c: &mut Criterion) {
    let mut gen = Generator::<f32>::new(ArchConfig::DESK, 3).unwrap();
    let imgs = synth_covers(8, 32, 17);
    c.bench_function("generator_infer_batch8_32px", |b| {
        b.iter(|| purify_with_generator(black_box(&mut gen), black_box(&imgs)).unwrap())
    });
}

criterion_group!(benches, bench_purify, bench_metrics, bench_embed, bench_generator);
criterion_main!(benches);
