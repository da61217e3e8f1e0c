//! Criterion benchmarks for the encoding, kernel, training and prediction stages.

use std::hint::black_box;

use criterion::{BenchmarkId, Criterion, Throughput};
use setfusion_core::harness::{generate_synthetic, SyntheticSpec};
use setfusion_core::set_model::{encode_all, EncodingConfig};
use setfusion_core::{fit, predict, ImageSet, KernelBank, KernelId, TrainConfig};

/// Gallery sizes used by the scaling benchmarks.
pub const GALLERY_SIZES: [usize; 3] = [20, 40, 80];

pub fn gallery(n: usize, dim: usize) -> Vec<ImageSet> {
    generate_synthetic(&SyntheticSpec {
        classes: 4,
        sets_per_class: n / 4,
        dim,
        ..SyntheticSpec::standard()
    })
    .expect("valid spec")
}

fn config() -> TrainConfig {
    TrainConfig {
        subspace_dim: 4,
        ..TrainConfig::default()
    }
}

pub fn encoding(c: &mut Criterion) {
    let mut group = c.benchmark_group("encode");
    for dim in [10, 20, 40] {
        let sets = gallery(20, dim);
        let cfg = EncodingConfig {
            alpha: 1e3,
            subspace_dim: 4,
        };
        group.throughput(Throughput::Elements(sets.len() as u64));
        group.bench_with_input(BenchmarkId::from_parameter(dim), &sets, |b, sets| {
            b.iter(|| encode_all(black_box(sets), &cfg).unwrap())
        });
    }
    group.finish();
}

pub fn kernel_bank(c: &mut Criterion) {
    let mut group = c.benchmark_group("kernel_bank");
    for n in GALLERY_SIZES {
        let triples = encode_all(&gallery(n, 10), &config().encoding()).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &triples, |b, t| {
            b.iter(|| KernelBank::build(black_box(t), &KernelId::ALL, true).unwrap())
        });
    }
    group.finish();
}

pub fn training(c: &mut Criterion) {
    let mut group = c.benchmark_group("fit");
    group.sample_size(10);
    // Fixed iteration count so timings compare across gallery sizes.
    let cfg = TrainConfig { eps: 0.0, ..config() };
    for n in GALLERY_SIZES {
        let sets = gallery(n, 10);
        group.bench_with_input(BenchmarkId::from_parameter(n), &sets, |b, sets| {
            b.iter(|| fit(black_box(sets), &cfg).unwrap())
        });
    }
    group.finish();
}

pub fn prediction(c: &mut Criterion) {
    let mut group = c.benchmark_group("predict");
    for n in GALLERY_SIZES {
        let sets = gallery(n + 4, 10);
        let (train, probes) = sets.split_at(n);
        let model = fit(train, &config()).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &probes[0], |b, probe| {
            b.iter(|| predict(black_box(probe), &model).unwrap())
        });
    }
    group.finish();
}
