use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use gromovlab::*;
use gromovlab_bench::{bench_params, cloud};

fn bench_gw(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve_gw");
    group.sample_size(10);
    for n in [8usize, 16, 24] {
        let x = cloud(1, n);
        let y = cloud(2, n);
        let params = bench_params();
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| solve_gw(black_box(&x), black_box(&y), &params).unwrap().value)
        });
    }
    group.finish();
}

fn bench_sinkhorn(c: &mut Criterion) {
    use ndarray::{Array1, Array2};
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let n = 64;
    let cost = Array2::from_shape_fn((n, n), |_| rng.random_range(0.0..1.0));
    let w = Array1::from_elem(n, 1.0 / n as f64);
    c.bench_function("sinkhorn_64x64", |b| {
        b.iter(|| sinkhorn(black_box(&cost), &w, &w, 0.05, 2000, 1e-9).unwrap().total_mass())
    });
}

fn bench_mgw_eps(c: &mut Criterion) {
    let s = cloud(4, 4);
    let x = cloud(5, 4);
    let y = cloud(6, 4);
    let params = bench_params();
    c.bench_function("mgw_eps_4x4x4", |b| {
        b.iter(|| {
            solve_mgw_eps(black_box(&s), black_box(&x), black_box(&y), 0.25, &params, None)
                .unwrap()
                .value
        })
    });
}

fn bench_lgw_matrix_maps(c: &mut Criterion) {
    let reference = cloud(7, 6);
    let spaces: Vec<MmSpace> = (0..4).map(|k| cloud(10 + k, 6)).collect();
    let refs: Vec<&MmSpace> = spaces.iter().collect();
    let params = bench_params();
    let mut group = c.benchmark_group("lgw_matrix");
    group.sample_size(10);
    group.bench_function("maps_4_spaces", |b| {
        b.iter(|| {
            lgw_matrix(
                black_box(&reference),
                black_box(&refs),
                &params,
                MatrixMode::Maps(MapMode::ModeArgmax),
            )
            .unwrap()
            .values
            .sum()
        })
    });
    group.finish();
}

criterion_group!(benches, bench_gw, bench_sinkhorn, bench_mgw_eps, bench_lgw_matrix_maps);
criterion_main!(benches);
