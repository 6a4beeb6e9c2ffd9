use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

use mlkf_core::bounds;
use mlkf_core::filter::{find_thresholds, FilterConfig, Variant};
use mlkf_core::importance::{penalized_path, PenaltySpec};
use mlkf_core::knockoffs::{build_equicorrelated_s, fixed_design_knockoffs};
use mlkf_core::model::{standardize, Dataset, LayerSpec};

fn standardized_dataset(n: usize, p: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let x: DMatrix<f64> = DMatrix::from_fn(n, p, |_, _| StandardNormal.sample(&mut rng));
    let beta = DVector::from_fn(p, |j, _| if j < p / 8 { 2.0 } else { 0.0 });
    let noise: DVector<f64> = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
    let y = &x * beta + noise;
    standardize(&Dataset::new(x, y).unwrap()).unwrap()
}

fn bench_knockoff_construction(c: &mut Criterion) {
    let ds = standardized_dataset(240, 80, 1);
    let sigma = ds.x().transpose() * ds.x();
    let groups = LayerSpec::contiguous_partition(80, 8);
    c.bench_function("equicorrelated_s_80", |b| {
        b.iter(|| build_equicorrelated_s(black_box(&sigma), black_box(&groups)).unwrap())
    });
    let pkg = build_equicorrelated_s(&sigma, &groups).unwrap();
    c.bench_function("fixed_design_knockoffs_240x80", |b| {
        b.iter(|| fixed_design_knockoffs(black_box(&ds), black_box(&pkg), 7).unwrap())
    });
}

fn bench_penalized_path(c: &mut Criterion) {
    let ds = standardized_dataset(240, 80, 2);
    let sigma = ds.x().transpose() * ds.x();
    let groups = LayerSpec::contiguous_partition(80, 8);
    let pkg = build_equicorrelated_s(&sigma, &groups).unwrap();
    let design = fixed_design_knockoffs(&ds, &pkg, 3).unwrap();
    let mut aug = DMatrix::zeros(ds.n(), 2 * ds.num_vars());
    aug.view_mut((0, 0), (ds.n(), ds.num_vars())).copy_from(ds.x());
    aug.view_mut((0, ds.num_vars()), (ds.n(), ds.num_vars()))
        .copy_from(design.x_tilde());
    c.bench_function("penalized_path_l1_160cols", |b| {
        b.iter(|| penalized_path(black_box(&aug), ds.y(), &groups, &PenaltySpec::l1()).unwrap())
    });
}

fn bench_threshold_search(c: &mut Criterion) {
    let mut rng = ChaCha12Rng::seed_from_u64(4);
    let n_vars = 2000;
    let spec = LayerSpec::new(
        n_vars,
        vec![
            LayerSpec::singleton_partition(n_vars),
            LayerSpec::contiguous_partition(n_vars, 10),
        ],
    )
    .unwrap();
    let w1: Vec<f64> = (0..n_vars).map(|_| rng.random::<f64>() * 4.0 - 1.5).collect();
    let w2: Vec<f64> = (0..n_vars / 10).map(|_| rng.random::<f64>() * 4.0 - 1.5).collect();
    let all_w = vec![w1, w2];
    let cfg = FilterConfig::new(vec![0.2, 0.2], Variant::Plus, 1.0).unwrap();
    c.bench_function("find_thresholds_2000x200", |b| {
        b.iter(|| find_thresholds(black_box(&all_w), &spec, &cfg).unwrap())
    });
}

fn bench_bounds(c: &mut Criterion) {
    c.bench_function("akn_refined_bound_k12", |b| {
        b.iter(|| bounds::akn_refined_bound(black_box(12)).unwrap())
    });
    c.bench_function("apf_exact_100", |b| {
        b.iter(|| bounds::apf_exact(black_box(100)).unwrap())
    });
}

criterion_group!(
    benches,
    bench_knockoff_construction,
    bench_penalized_path,
    bench_threshold_search,
    bench_bounds
);
criterion_main!(benches);
