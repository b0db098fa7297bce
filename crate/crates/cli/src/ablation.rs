//! View-count study: random analytic scenes meshed from the first 4, 6, 8
//! and 14 views of the extended rig.

use anyhow::{Context, Result};
use clap::Args;
use log::info;
use serde::Serialize;
use statrs::distribution::{Binomial, DiscreteCDF};

use orthofuse::metrics::{chamfer_distance, volume_iou};
use orthofuse::recon::{mesh_from_views, MeshingOptions, PoissonOptions};
use orthofuse::scenes::VIEW_COUNTS;
use orthofuse::{extended_view_rig, render_gt_views, AnalyticScene};

#[derive(Args)]
pub struct AblateArgs {
    /// Number of random scenes.
    #[arg(long, default_value_t = 20)]
    scenes: usize,
    /// Scene `k` uses `AnalyticScene::random(seed + k)`.
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 192)]
    res: usize,
    #[arg(long, default_value_t = 96)]
    grid: usize,
    /// Marching-cubes grid for the ground-truth meshes.
    #[arg(long, default_value_t = 192)]
    gt_res: usize,
    /// Chamfer samples per mesh; the default keeps the sampling floor well
    /// below the differences between view counts.
    #[arg(long, default_value_t = 131_072)]
    samples: usize,
    #[arg(long, default_value_t = orthofuse::metrics::IOU_GRID)]
    iou_grid: usize,
}

#[derive(Debug, Serialize)]
struct Row {
    scene: u64,
    views: usize,
    chamfer: f64,
    volume_iou: f64,
}

#[derive(Debug, Serialize)]
struct Summary {
    views: usize,
    scenes: usize,
    median_chamfer: f64,
    mean_chamfer: f64,
    median_volume_iou: f64,
}

#[derive(Debug, Serialize)]
struct Trend {
    non_increasing: bool,
    /// Median over scenes of `(cd4 - cd6) - (cd8 - cd14)`.
    median_gain_difference: f64,
    /// Scenes where the 4->6 gain beats the 8->14 gain, out of `trials` non-ties.
    wins: u64,
    trials: u64,
    sign_test_p: f64,
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// One-sided sign test: P(X >= wins) for X ~ Binomial(trials, 1/2).
pub fn sign_test(wins: u64, trials: u64) -> f64 {
    if wins == 0 {
        return 1.0;
    }
    let b = Binomial::new(0.5, trials).expect("valid binomial");
    b.sf(wins - 1)
}

pub fn run(a: &AblateArgs) -> Result<()> {
    let opts = MeshingOptions {
        poisson: PoissonOptions {
            grid: a.grid,
            ..Default::default()
        },
        ..Default::default()
    };
    let max_views = *VIEW_COUNTS.last().unwrap();
    let cams = extended_view_rig(max_views, a.res, 1.0, 2.0)?;
    let mut rows = Vec::new();
    for k in 0..a.scenes as u64 {
        let id = a.seed + k;
        let scene = AnalyticScene::random(id);
        let gt = scene.mesh(a.gt_res);
        let all = render_gt_views(&scene, &cams)?;
        for &count in &VIEW_COUNTS {
            let subset: Vec<usize> = (0..count).collect();
            let mesh = mesh_from_views(&all.select(&subset), &opts).with_context(|| format!("scene {id}, {count} views"))?;
            let row = Row {
                scene: id,
                views: count,
                chamfer: chamfer_distance(&mesh, &gt, a.samples)?,
                volume_iou: volume_iou(&mesh, &gt, a.iou_grid)?,
            };
            info!("{row:?}");
            rows.push(row);
        }
    }

    let column = |count: usize, f: fn(&Row) -> f64| -> Vec<f64> { rows.iter().filter(|r| r.views == count).map(f).collect() };
    let summaries: Vec<Summary> = VIEW_COUNTS
        .iter()
        .map(|&count| {
            let cd = column(count, |r| r.chamfer);
            Summary {
                views: count,
                scenes: cd.len(),
                median_chamfer: median(&cd),
                mean_chamfer: cd.iter().sum::<f64>() / cd.len() as f64,
                median_volume_iou: median(&column(count, |r| r.volume_iou)),
            }
        })
        .collect();

    let [c4, c6, c8, c14] = [4, 6, 8, 14].map(|n| column(n, |r| r.chamfer));
    let gains: Vec<f64> = (0..c4.len()).map(|i| (c4[i] - c6[i]) - (c8[i] - c14[i])).collect();
    let wins = gains.iter().filter(|g| **g > 0.0).count() as u64;
    let trials = gains.iter().filter(|g| **g != 0.0).count() as u64;
    let trend = Trend {
        non_increasing: summaries.windows(2).all(|w| w[1].median_chamfer <= w[0].median_chamfer),
        median_gain_difference: median(&gains),
        wins,
        trials,
        sign_test_p: sign_test(wins, trials),
    };

    println!("{:>6} {:>7} {:>14} {:>14} {:>10}", "views", "scenes", "median_cd", "mean_cd", "median_iou");
    for s in &summaries {
        println!("{:>6} {:>7} {:>14.6e} {:>14.6e} {:>10.4}", s.views, s.scenes, s.median_chamfer, s.mean_chamfer, s.median_volume_iou);
    }
    println!(
        "trend: non_increasing={} gain(4->6)-gain(8->14) median={:.3e} wins={}/{} sign_test_p={:.4}",
        trend.non_increasing, trend.median_gain_difference, trend.wins, trend.trials, trend.sign_test_p
    );
    for r in &rows {
        println!("{}", serde_json::to_string(r)?);
    }
    for s in &summaries {
        println!("{}", serde_json::to_string(s)?);
    }
    println!("{}", serde_json::to_string(&trend)?);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sign_test_matches_direct_sum() {
        let direct = |k: u64, n: u64| -> f64 {
            let mut c = 1.0f64;
            let mut total = 0.0;
            for i in 0..=n {
                if i >= k {
                    total += c;
                }
                c = c * (n - i) as f64 / (i + 1) as f64;
            }
            total / 2f64.powi(n as i32)
        };
        for (k, n) in [(15, 20), (14, 20), (20, 20), (1, 3), (0, 5)] {
            assert!((sign_test(k, n) - direct(k, n)).abs() < 1e-12, "{k}/{n}");
        }
        assert!((sign_test(15, 20) - 0.020694732666015625).abs() < 1e-12);
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
