//! Finite-difference harnesses for the analytic gradients, shared by the
//! test suites and the `attn-check` command.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::camera::{make_six_view_rig, OrthoCamera, Vec3};
use crate::gaussians::{Gaussian3D, GaussianCloud};
use crate::splat::{render, render_backward, render_signature, Gradients, RenderOutput};

pub const FD_STEP: f64 = 1e-4;

/// Worst relative error over parameter classes, `||a - n|| / max(||n||, floor)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub classes: Vec<(&'static str, f64)>,
}

impl GradCheck {
    pub fn max_error(&self) -> f64 {
        self.classes.iter().map(|c| c.1).fold(0.0, f64::max)
    }
}

const NORM_FLOOR: f64 = 1e-8;

pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff = analytic.iter().zip(numeric).map(|(a, n)| (a - n) * (a - n)).sum::<f64>().sqrt();
    let scale = numeric.iter().map(|n| n * n).sum::<f64>().sqrt().max(NORM_FLOOR);
    diff / scale
}

pub fn gaussian_normal(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// A random 8-Gaussian scene seen by the Front camera at 16x16, with a
/// random upstream gradient on every output.
pub fn splat_instance(seed: u64) -> (GaussianCloud, OrthoCamera, RenderOutput) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cam = make_six_view_rig(16, 1.0, 2.0).unwrap()[0];
    let gaussians = (0..8)
        .map(|_| Gaussian3D {
            center: Vec3::from_fn(|_, _| rng.gen_range(-0.6..0.6)),
            color: Vec3::from_fn(|_, _| rng.gen_range(0.0..1.0)),
            opacity: rng.gen_range(0.2..0.9),
            scale: Vec3::from_fn(|_, _| rng.gen_range(0.06..0.25)),
            rotation: {
                let q: [f64; 4] = std::array::from_fn(|_| gaussian_normal(&mut rng));
                crate::gaussians::normalize_quat(q)
            },
        })
        .collect();
    let mut up = RenderOutput::zeros(16, 16);
    for x in up.color.iter_mut().chain(&mut up.alpha).chain(&mut up.depth) {
        *x = gaussian_normal(&mut rng);
    }
    (
        GaussianCloud {
            gaussians,
            source: Vec::new(),
        },
        cam,
        up,
    )
}

fn inner(a: &RenderOutput, b: &RenderOutput) -> f64 {
    let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>();
    dot(&a.color, &b.color) + dot(&a.alpha, &b.alpha) + dot(&a.depth, &b.depth)
}

/// Scalar parameter `k` of Gaussian `i` in the order center, color,
/// opacity, scale, rotation (14 per Gaussian).
fn param_mut(g: &mut Gaussian3D, k: usize) -> &mut f64 {
    match k {
        0..=2 => &mut g.center[k],
        3..=5 => &mut g.color[k - 3],
        6 => &mut g.opacity,
        7..=9 => &mut g.scale[k - 7],
        _ => &mut g.rotation[k - 10],
    }
}

fn grad_entry(grads: &Gradients, i: usize, k: usize) -> f64 {
    match k {
        0..=2 => grads.center[i][k],
        3..=5 => grads.color[i][k - 3],
        6 => grads.opacity[i],
        7..=9 => grads.scale[i][k - 7],
        _ => grads.rotation[i][k - 10],
    }
}

const CLASSES: [(&str, std::ops::Range<usize>); 5] = [
    ("center", 0..3),
    ("color", 3..6),
    ("opacity", 6..7),
    ("scale", 7..10),
    ("rotation", 10..14),
];

/// Central differences of `<upstream, render(cloud)>` against
/// [`render_backward`]. Returns `None` when any perturbation crosses a
/// clamp, cutoff, sort-order or termination boundary.
pub fn check_splat_gradients(cloud: &GaussianCloud, cam: &OrthoCamera, upstream: &RenderOutput) -> Option<GradCheck> {
    let base_sig = render_signature(cloud, cam);
    let grads = render_backward(cloud, cam, upstream).ok()?;
    let mut analytic = vec![Vec::new(); CLASSES.len()];
    let mut numeric = vec![Vec::new(); CLASSES.len()];
    for i in 0..cloud.len() {
        for (c, (_, range)) in CLASSES.iter().enumerate() {
            for k in range.clone() {
                let eval = |delta: f64| {
                    let mut pert = cloud.clone();
                    *param_mut(&mut pert.gaussians[i], k) += delta;
                    if render_signature(&pert, cam) != base_sig {
                        return None;
                    }
                    Some(inner(&render(&pert, cam).ok()?, upstream))
                };
                let plus = eval(FD_STEP)?;
                let minus = eval(-FD_STEP)?;
                numeric[c].push((plus - minus) / (2.0 * FD_STEP));
                analytic[c].push(grad_entry(&grads, i, k));
            }
        }
    }
    Some(GradCheck {
        classes: CLASSES
            .iter()
            .enumerate()
            .map(|(c, (name, _))| (*name, relative_error(&analytic[c], &numeric[c])))
            .collect(),
    })
}

/// Runs seeded instances until `accepted` of them avoid every boundary;
/// returns `(seed, check)` for each accepted instance.
pub fn splat_gradient_suite(accepted: usize, first_seed: u64) -> Vec<(u64, GradCheck)> {
    let mut out = Vec::with_capacity(accepted);
    let mut seed = first_seed;
    while out.len() < accepted {
        let (cloud, cam, up) = splat_instance(seed);
        if let Some(check) = check_splat_gradients(&cloud, &cam, &up) {
            out.push((seed, check));
        }
        seed += 1;
    }
    out
}

/// A random attention instance on the six-view rig: `N = 6, C = 8,
/// H = W = 4`, two heads, plus a random upstream gradient.
pub fn attention_instance(
    seed: u64,
) -> (
    crate::epipolar::MultiViewFeatureMap,
    Vec<OrthoCamera>,
    crate::epipolar::AttentionWeights,
    crate::epipolar::MultiViewFeatureMap,
) {
    use crate::epipolar::{AttentionWeights, MultiViewFeatureMap};
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA77E_0000);
    let cams = make_six_view_rig(4, 1.0, 2.0).unwrap();
    let mut maps = MultiViewFeatureMap::zeros(6, 8, 4, 4);
    maps.data.iter_mut().for_each(|x| *x = gaussian_normal(&mut rng));
    let mut w = AttentionWeights::zeros(8);
    for m in [&mut w.query, &mut w.key, &mut w.value, &mut w.output] {
        m.iter_mut().for_each(|x| *x = 0.5 * gaussian_normal(&mut rng));
    }
    let mut up = MultiViewFeatureMap::zeros(6, 8, 4, 4);
    up.data.iter_mut().for_each(|x| *x = gaussian_normal(&mut rng));
    (maps, cams, w, up)
}

pub const ATTENTION_HEADS: usize = 2;

/// Central differences of `<upstream, attention(maps)>` against the
/// analytic gradients for the features and all four projections.
pub fn check_attention_gradients(seed: u64) -> GradCheck {
    use crate::epipolar::{epipolar_attention, epipolar_attention_backward, AttentionWeights, MultiViewFeatureMap};
    let (maps, cams, weights, up) = attention_instance(seed);
    let heads = ATTENTION_HEADS;
    let grads = epipolar_attention_backward(&maps, &cams, &weights, heads, &up).unwrap();
    let loss = |m: &MultiViewFeatureMap, w: &AttentionWeights| -> f64 {
        let out = epipolar_attention(m, &cams, w, heads).unwrap();
        out.data.iter().zip(&up.data).map(|(a, b)| a * b).sum()
    };
    let fd = |perturb: &dyn Fn(f64) -> (MultiViewFeatureMap, AttentionWeights)| {
        let (mp, wp) = perturb(FD_STEP);
        let (mm, wm) = perturb(-FD_STEP);
        (loss(&mp, &wp) - loss(&mm, &wm)) / (2.0 * FD_STEP)
    };
    let mut classes = Vec::new();
    let numeric: Vec<f64> = (0..maps.data.len())
        .map(|k| {
            fd(&|d| {
                let mut m = maps.clone();
                m.data[k] += d;
                (m, weights.clone())
            })
        })
        .collect();
    classes.push(("features", relative_error(&grads.features.data, &numeric)));
    type Field = fn(&mut AttentionWeights) -> &mut Vec<f64>;
    let fields: [(&str, Field); 4] = [
        ("query", |w| &mut w.query),
        ("key", |w| &mut w.key),
        ("value", |w| &mut w.value),
        ("output", |w| &mut w.output),
    ];
    for (name, field) in fields {
        let numeric: Vec<f64> = (0..64)
            .map(|k| {
                fd(&|d| {
                    let mut w = weights.clone();
                    field(&mut w)[k] += d;
                    (maps.clone(), w)
                })
            })
            .collect();
        let mut g = grads.weights.clone();
        classes.push((name, relative_error(field(&mut g), &numeric)));
    }
    GradCheck { classes }
}

/// A perturbed 8x8 sphere view set and its ground truth, for checking the
/// full training objective. Every foreground pixel keeps a Gaussian.
pub fn objective_instance(seed: u64) -> (crate::gaussians::ViewSet, crate::gaussians::ViewSet) {
    use crate::scenes::{render_gt_views, AnalyticScene};
    let cams = make_six_view_rig(8, 1.0, 2.0).unwrap();
    let gt = render_gt_views(&AnalyticScene::named("sphere").unwrap(), &cams).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pred = gt.clone();
    for k in 0..pred.depth.len() {
        if pred.depth[k] > 0.0 {
            pred.depth[k] += rng.gen_range(-0.05..0.05);
        }
        pred.opacity_raw[k] = gaussian_normal(&mut rng);
    }
    pred.rgb.iter_mut().for_each(|x| *x = (*x + rng.gen_range(-0.2..0.2)).clamp(0.0, 1.0));
    pred.scale_raw.iter_mut().for_each(|x| *x = rng.gen_range(-1.0..1.0));
    pred.quat_raw.iter_mut().for_each(|x| *x = rng.gen_range(-1.0..1.0));
    (pred, gt)
}

/// Per-channel outcome of [`check_objective_gradients`].
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelCheck {
    pub name: &'static str,
    pub checked: usize,
    pub skipped: usize,
    pub total: usize,
    pub error: f64,
}

/// Central differences of the full objective with respect to every raw
/// view-set channel. Parameters whose `+/-h` changes an NVS render
/// signature or the sign pattern of the L1 / gradient-matching arguments
/// are skipped.
pub fn check_objective_gradients(
    pred: &crate::gaussians::ViewSet,
    gt: &crate::gaussians::ViewSet,
    nvs_seed: u64,
) -> crate::error::Result<Vec<ChannelCheck>> {
    use crate::gaussians::{build_pixel_gaussians, ViewSet};
    use crate::losses::{nvs_cameras, objective, objective_with_grad, reg_sign_pattern, LossWeights};
    let w = LossWeights::default();
    let (_, grad) = objective_with_grad(pred, gt, &w, nvs_seed)?;
    let cams = nvs_cameras(pred, &w, nvs_seed)?;
    let signature = |v: &ViewSet| -> crate::error::Result<Vec<u64>> {
        let cloud = build_pixel_gaussians(v, 0.0)?;
        Ok(cams.iter().map(|c| render_signature(&cloud, c)).collect())
    };
    let base_sig = signature(pred)?;
    let base_signs = reg_sign_pattern(pred, gt)?;
    type Channel = fn(&mut ViewSet) -> &mut Vec<f64>;
    let channels: [(&'static str, Channel, &[f64]); 5] = [
        ("rgb", |v| &mut v.rgb, &grad.rgb),
        ("depth", |v| &mut v.depth, &grad.depth),
        ("opacity_raw", |v| &mut v.opacity_raw, &grad.opacity_raw),
        ("scale_raw", |v| &mut v.scale_raw, &grad.scale_raw),
        ("quat_raw", |v| &mut v.quat_raw, &grad.quat_raw),
    ];
    let mut out = Vec::new();
    for (name, field, analytic) in channels {
        let (mut a, mut n) = (Vec::new(), Vec::new());
        let mut skipped = 0;
        let total = analytic.len();
        for k in 0..total {
            if name == "depth" && pred.depth[k] <= 0.0 {
                continue;
            }
            let mut plus = pred.clone();
            field(&mut plus)[k] += FD_STEP;
            let mut minus = pred.clone();
            field(&mut minus)[k] -= FD_STEP;
            let kinked = |v: &ViewSet| -> crate::error::Result<bool> { Ok(reg_sign_pattern(v, gt)? != base_signs) };
            if signature(&plus)? != base_sig || signature(&minus)? != base_sig || kinked(&plus)? || kinked(&minus)? {
                skipped += 1;
                continue;
            }
            let fp = objective(&plus, gt, &w, nvs_seed)?.total;
            let fm = objective(&minus, gt, &w, nvs_seed)?.total;
            a.push(analytic[k]);
            n.push((fp - fm) / (2.0 * FD_STEP));
        }
        out.push(ChannelCheck {
            name,
            checked: a.len(),
            skipped,
            total,
            error: relative_error(&a, &n),
        });
    }
    Ok(out)
}
