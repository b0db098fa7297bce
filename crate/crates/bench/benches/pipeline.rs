use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use orthofuse::epipolar::{epipolar_attention, AttentionWeights, MultiViewFeatureMap};
use orthofuse::metrics::{chamfer_distance, volume_iou};
use orthofuse::recon::{fuse_oriented_cloud, poisson_reconstruct, PoissonOptions};
use orthofuse::{build_pixel_gaussians, make_six_view_rig, render, render_gt_views, AnalyticScene};

fn bench_render(c: &mut Criterion) {
    let mut group = c.benchmark_group("splat_render");
    group.sample_size(10);
    for res in [64, 128] {
        let cams = make_six_view_rig(res, 1.0, 2.0).unwrap();
        let views = render_gt_views(&AnalyticScene::named("sphere-box").unwrap(), &cams).unwrap();
        let cloud = build_pixel_gaussians(&views, 0.0).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(res), &res, |b, _| b.iter(|| render(&cloud, &cams[0]).unwrap()));
    }
    group.finish();
}

fn bench_attention(c: &mut Criterion) {
    let mut group = c.benchmark_group("epipolar_attention");
    group.sample_size(10);
    for res in [8, 16] {
        let cams = make_six_view_rig(res, 1.0, 2.0).unwrap();
        let mut maps = MultiViewFeatureMap::zeros(6, 16, res, res);
        maps.data.iter_mut().enumerate().for_each(|(i, x)| *x = ((i * 7919) % 101) as f64 / 101.0 - 0.5);
        let w = AttentionWeights::identity(16);
        group.bench_with_input(BenchmarkId::from_parameter(res), &res, |b, _| {
            b.iter(|| epipolar_attention(&maps, &cams, &w, 2).unwrap())
        });
    }
    group.finish();
}

fn bench_poisson(c: &mut Criterion) {
    let mut group = c.benchmark_group("poisson");
    group.sample_size(10);
    let cams = make_six_view_rig(128, 1.0, 2.0).unwrap();
    let views = render_gt_views(&AnalyticScene::named("torus").unwrap(), &cams).unwrap();
    let cloud = fuse_oriented_cloud(&views).unwrap();
    for grid in [32, 64] {
        let opts = PoissonOptions { grid, ..Default::default() };
        group.bench_with_input(BenchmarkId::from_parameter(grid), &grid, |b, _| b.iter(|| poisson_reconstruct(&cloud, &opts).unwrap()));
    }
    group.finish();
}

fn bench_metrics(c: &mut Criterion) {
    let mut group = c.benchmark_group("metrics");
    group.sample_size(10);
    let a = AnalyticScene::named("sphere").unwrap().mesh(64);
    let b = AnalyticScene::named("box").unwrap().mesh(64);
    group.bench_function("chamfer_16384", |bch| bch.iter(|| chamfer_distance(&a, &b, 16_384).unwrap()));
    group.bench_function("volume_iou_64", |bch| bch.iter(|| volume_iou(&a, &b, 64).unwrap()));
    group.finish();
}

criterion_group!(benches, bench_render, bench_attention, bench_poisson, bench_metrics);
criterion_main!(benches);
