use orthofuse::losses::{
    loss_gm, loss_nvs, loss_reg, objective, reference_renders, LossReport, LossWeights,
};
use orthofuse::{build_pixel_gaussians, make_six_view_rig, render_gt_views, sample_novel_cameras, AnalyticScene, ViewSet};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn gt_views(res: usize) -> ViewSet {
    let cams = make_six_view_rig(res, 1.0, 2.0).unwrap();
    render_gt_views(&AnalyticScene::named("sphere-box").unwrap(), &cams).unwrap()
}

fn random_views(res: usize, seed: u64) -> ViewSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cams = make_six_view_rig(res, 1.0, 2.0).unwrap();
    let mut v = ViewSet::zeros(cams).unwrap();
    v.rgb.iter_mut().for_each(|x| *x = rng.gen_range(0.0..1.0));
    v.depth.iter_mut().for_each(|x| *x = if rng.gen_bool(0.7) { rng.gen_range(0.5..3.5) } else { 0.0 });
    v.opacity_raw.iter_mut().for_each(|x| *x = rng.gen_range(-3.0..3.0));
    v.scale_raw.iter_mut().for_each(|x| *x = rng.gen_range(-1.0..1.0));
    v.quat_raw.iter_mut().for_each(|x| *x = rng.gen_range(-1.0..1.0));
    v
}

#[test]
fn identical_views_give_zero() {
    let gt = gt_views(16);
    let w = LossWeights::default();
    let r = loss_reg(&gt, &gt, &w).unwrap();
    assert_eq!(r, LossReport::default());
    let full = objective(&gt, &gt, &w, 3).unwrap();
    assert_eq!(full.total, 0.0);
}

#[test]
fn constant_rgb_offset() {
    let gt = gt_views(16);
    let mut pred = gt.clone();
    pred.rgb.iter_mut().for_each(|x| *x += 0.1);
    let r = loss_reg(&pred, &gt, &LossWeights::default()).unwrap();
    assert!((r.reg_rgb_mse - 0.01).abs() < 1e-12);
    assert_eq!(r.reg_dep_l1, 0.0);
    assert_eq!(r.total, r.reg_rgb_mse);
}

#[test]
fn shape_mismatch_is_an_error() {
    let a = gt_views(16);
    let b = gt_views(8);
    assert!(loss_reg(&a, &b, &LossWeights::default()).is_err());
}

/// Naive evaluation straight from the definitions, pixel by pixel.
fn brute_force_reg(pred: &ViewSet, gt: &ViewSet) -> (f64, f64, f64) {
    let (n, h, wd) = (pred.num_views(), pred.height, pred.width);
    let mut rgb = 0.0;
    for view in 0..n {
        for c in 0..3 {
            for v in 0..h {
                for u in 0..wd {
                    let k = pred.channel_index(3, view, c, u, v);
                    rgb += (pred.rgb[k] - gt.rgb[k]).powi(2);
                }
            }
        }
    }
    rgb /= (n * 3 * h * wd) as f64;
    let (mut l1, mut count) = (0.0, 0);
    for view in 0..n {
        for v in 0..h {
            for u in 0..wd {
                if gt.depth_at(view, u, v) > 0.0 {
                    l1 += (pred.depth_at(view, u, v) - gt.depth_at(view, u, v)).abs();
                    count += 1;
                }
            }
        }
    }
    l1 /= count as f64;

    let mut gm = 0.0;
    for view in 0..n {
        let mut r: Vec<Vec<Option<f64>>> = (0..h)
            .map(|v| {
                (0..wd)
                    .map(|u| {
                        let g = gt.depth_at(view, u, v);
                        (g > 0.0).then(|| pred.depth_at(view, u, v) - g)
                    })
                    .collect()
            })
            .collect();
        for scale in 0..4 {
            if scale > 0 {
                let (h2, w2) = (r.len() / 2, r[0].len() / 2);
                r = (0..h2)
                    .map(|y| {
                        (0..w2)
                            .map(|x| {
                                let cells = [r[2 * y][2 * x], r[2 * y][2 * x + 1], r[2 * y + 1][2 * x], r[2 * y + 1][2 * x + 1]];
                                if cells.iter().all(|c| c.is_some()) {
                                    Some(cells.iter().map(|c| c.unwrap()).sum::<f64>() / 4.0)
                                } else {
                                    None
                                }
                            })
                            .collect()
                    })
                    .collect();
            }
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            for y in 0..r.len() {
                for x in 0..r[0].len() {
                    if let (Some(a), Some(Some(b))) = (r[y][x], r[y].get(x + 1)) {
                        xs.push((b - a).abs());
                    }
                    if let (Some(a), Some(Some(b))) = (r[y][x], r.get(y + 1).map(|row| row[x])) {
                        ys.push((b - a).abs());
                    }
                }
            }
            for d in [xs, ys] {
                if !d.is_empty() {
                    gm += d.iter().sum::<f64>() / d.len() as f64 / n as f64;
                }
            }
        }
    }
    (rgb, l1, gm)
}

#[test]
fn matches_brute_force_on_random_8x8() {
    let w = LossWeights::default();
    for seed in 0..5 {
        let pred = random_views(8, seed);
        let gt = random_views(8, seed + 100);
        let r = loss_reg(&pred, &gt, &w).unwrap();
        let (rgb, l1, gm) = brute_force_reg(&pred, &gt);
        assert!((r.reg_rgb_mse - rgb).abs() < 1e-12);
        assert!((r.reg_dep_l1 - l1).abs() < 1e-12);
        assert!((r.reg_dep_gm - gm).abs() < 1e-12, "{} vs {}", r.reg_dep_gm, gm);
        assert_eq!(r.total, r.weighted_total(&w));
        assert!((r.total - (rgb + l1 + w.gm * gm)).abs() < 1e-12);
    }
}

#[test]
fn ramp_residual_at_rig_resolution() {
    let (h, w) = (64, 64);
    let a = 0.01;
    let gt = vec![2.0; h * w];
    let pred: Vec<f64> = (0..h * w).map(|i| 2.0 + a * (i % w) as f64).collect();
    let gm = loss_gm(&pred, &gt, &vec![true; h * w], h, w);
    assert!((gm - 15.0 * a).abs() < 1e-12);
    // The vertical ramp gives the same total.
    let pred: Vec<f64> = (0..h * w).map(|i| 2.0 + a * (i / w) as f64).collect();
    assert!((loss_gm(&pred, &gt, &vec![true; h * w], h, w) - 15.0 * a).abs() < 1e-12);
}

#[test]
fn nvs_self_consistency_and_determinism() {
    let gt = gt_views(16);
    let cloud = build_pixel_gaussians(&gt, 0.0).unwrap();
    let cams = sample_novel_cameras(10, 5, 16, 1.0, 2.0).unwrap();
    let reference = reference_renders(&cloud, &cams).unwrap();
    let w = LossWeights::default();
    let (r, g) = loss_nvs(&cloud, &reference, &cams, &w).unwrap();
    assert_eq!(r.total, 0.0);
    assert!(g.color.iter().all(|c| c.norm() == 0.0));
    assert!(g.center.iter().all(|c| c.norm() == 0.0));

    let mut moved = cloud.clone();
    moved.gaussians.iter_mut().for_each(|g| g.color.x *= 0.5);
    let a = loss_nvs(&moved, &reference, &cams, &w).unwrap().0;
    let b = loss_nvs(&moved, &reference, &cams, &w).unwrap().0;
    assert!(a.nvs_rgb_mse > 0.0);
    assert_eq!(a, b);
}

#[test]
fn color_perturbation_direction() {
    let gt = gt_views(16);
    let cloud = build_pixel_gaussians(&gt, 0.0).unwrap();
    let cams = sample_novel_cameras(10, 9, 16, 1.0, 2.0).unwrap();
    let reference = reference_renders(&cloud, &cams).unwrap();
    let w = LossWeights::default();
    // Probe the most visible of the first few hundred Gaussians.
    let probe = {
        let mut best = (0, 0.0);
        for (i, _) in cloud.gaussians.iter().enumerate() {
            let mut p = cloud.clone();
            p.gaussians[i].color.y += 0.1;
            let r = loss_nvs(&p, &reference, &cams, &w).unwrap().0.nvs_rgb_mse;
            if r > best.1 {
                best = (i, r);
            }
            if i > 400 {
                break;
            }
        }
        best.0
    };
    for delta in [0.1, -0.1] {
        let mut p = cloud.clone();
        p.gaussians[probe].color.y += delta;
        let (r, g) = loss_nvs(&p, &reference, &cams, &w).unwrap();
        assert!(r.nvs_rgb_mse > 0.0);
        assert_eq!(g.color[probe].y.signum(), delta.signum());
    }
}

#[test]
fn full_objective_matches_finite_differences() {
    let (pred, gt) = orthofuse::gradcheck::objective_instance(1);
    assert!(objective(&pred, &gt, &LossWeights::default(), 11).unwrap().total > 0.0);
    for c in orthofuse::gradcheck::check_objective_gradients(&pred, &gt, 11).unwrap() {
        eprintln!("{}: {} checked, {} skipped, rel err {:.3e}", c.name, c.checked, c.skipped, c.error);
        assert!(c.checked > c.total / 4, "{}: too few parameters checked", c.name);
        assert!(c.error < 1e-3, "{}: relative error {}", c.name, c.error);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn reg_terms_nonnegative_and_permutation_invariant(seed in 0u64..1_000, perm_seed in 0u64..1_000) {
        let pred = random_views(8, seed);
        let gt = random_views(8, seed + 7);
        let w = LossWeights::default();
        let r = loss_reg(&pred, &gt, &w).unwrap();
        prop_assert!(r.reg_rgb_mse >= 0.0 && r.reg_dep_l1 >= 0.0 && r.reg_dep_gm >= 0.0);
        prop_assert_eq!(r.total, r.weighted_total(&w));

        let mut order: Vec<usize> = (0..6).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(perm_seed);
        for i in (1..6).rev() {
            order.swap(i, rng.gen_range(0..=i));
        }
        let rp = loss_reg(&pred.select(&order), &gt.select(&order), &w).unwrap();
        prop_assert!((rp.reg_rgb_mse - r.reg_rgb_mse).abs() < 1e-12);
        prop_assert!((rp.reg_dep_l1 - r.reg_dep_l1).abs() < 1e-12);
        prop_assert!((rp.reg_dep_gm - r.reg_dep_gm).abs() < 1e-12);
    }
}
