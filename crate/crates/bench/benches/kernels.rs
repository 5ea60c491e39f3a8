use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use romap_core::geometry::Vec3;
use romap_core::mesh::{marching_cubes, MeshFrame, ScalarGrid};
use romap_core::nerf::{Gradients, HashGridModel, ModelConfig, OutputGrad};
use romap_core::objslam::{eif_fit, outlier_filter, EifConfig};
use romap_core::render::volume_render;

fn points(n: usize, seed: u64) -> Vec<Vec3> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| Vec3::new(rng.random(), rng.random(), rng.random())).collect()
}

fn nerf(c: &mut Criterion) {
    let model = HashGridModel::new(ModelConfig { table_size_log2: 14, ..Default::default() }, 1).unwrap();
    let x = points(1, 2)[0];
    c.bench_function("hash_encode", |b| b.iter(|| model.hash_encode(black_box(&x))));

    // One iteration's worth of samples at 128 rays x 32 samples.
    let pts = points(128 * 32, 3);
    c.bench_function("forward_4096", |b| b.iter(|| model.forward(black_box(&pts)).unwrap()));
    let (_, cache) = model.forward(&pts).unwrap();
    let up = vec![OutputGrad { d_sigma: 0.1, d_color: [0.1; 3] }; pts.len()];
    let mut grads = Gradients::for_model(&model);
    c.bench_function("backward_4096", |b| {
        b.iter(|| {
            grads.clear();
            model.backward(&cache, black_box(&up), &mut grads).unwrap()
        })
    });
}

fn render(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 32;
    let sig: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..20.0)).collect();
    let col: Vec<[f64; 3]> = (0..n).map(|_| [rng.random(), rng.random(), rng.random()]).collect();
    let dist: Vec<f64> = (0..n).map(|i| 0.5 + 0.01 * i as f64).collect();
    let sp = vec![0.01; n];
    c.bench_function("volume_render_32", |b| b.iter(|| volume_render(black_box(&sig), &col, &dist, &sp).unwrap()));
}

fn objslam(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cloud: Vec<Vec3> = (0..2000)
        .map(|_| Vec3::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1)))
        .collect();
    let cfg = EifConfig::default();
    c.bench_function("eif_fit_2000", |b| b.iter(|| eif_fit(black_box(&cloud), &cfg, 1).unwrap()));
    c.bench_function("outlier_filter_2000", |b| b.iter(|| outlier_filter(black_box(&cloud), &cfg, 1).unwrap()));
}

fn mesh(c: &mut Criterion) {
    let n = 64;
    let step = 1.0 / (n - 1) as f64;
    let mut values = Vec::with_capacity(n * n * n);
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                let p = Vec3::new(i as f64, j as f64, k as f64) * step - Vec3::repeat(0.5);
                values.push(0.4 - p.norm());
            }
        }
    }
    let grid = ScalarGrid {
        dims: [n; 3],
        origin: Vec3::repeat(-0.5),
        spacing: Vec3::repeat(step),
        values,
    };
    c.bench_function("marching_cubes_64", |b| b.iter(|| marching_cubes(black_box(&grid), 0.0, MeshFrame::Object, 0)));
}

criterion_group!(benches, nerf, render, objslam, mesh);
criterion_main!(benches);
