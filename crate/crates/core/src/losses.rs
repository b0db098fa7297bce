//! Training objective over six-view predictions: regression terms on the
//! views themselves plus novel-view terms through the splat renderer.

use rayon::prelude::*;

use crate::camera::OrthoCamera;
use crate::error::{Error, Result};
use crate::gaussians::{build_pixel_gaussians, scale_activation_grad, sigmoid, GaussianCloud, ViewSet};
use crate::splat::{render, render_backward, sample_novel_cameras, Gradients, RenderOutput};

pub const GM_SCALES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    /// Weight of the perceptual terms, which evaluate to zero here.
    pub lpips: f64,
    pub gm: f64,
    pub nvs_views: usize,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lpips: 0.5,
            gm: 2.0,
            nvs_views: 10,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.lpips >= 0.0 && self.gm >= 0.0) {
            return Err(Error::invalid("loss weights must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossReport {
    pub total: f64,
    pub reg_rgb_mse: f64,
    pub reg_rgb_lpips: f64,
    pub reg_dep_l1: f64,
    pub reg_dep_gm: f64,
    pub nvs_rgb_mse: f64,
    pub nvs_rgb_lpips: f64,
    pub nvs_alpha_mse: f64,
}

impl LossReport {
    /// Recomputes `total` from the components.
    pub fn weighted_total(&self, w: &LossWeights) -> f64 {
        let reg = self.reg_rgb_mse + w.lpips * self.reg_rgb_lpips + self.reg_dep_l1 + w.gm * self.reg_dep_gm;
        let nvs = self.nvs_rgb_mse + w.lpips * self.nvs_rgb_lpips + self.nvs_alpha_mse;
        reg + nvs
    }

    fn finish(mut self, w: &LossWeights) -> Self {
        self.total = self.weighted_total(w);
        self
    }

    /// `key=value` lines in a fixed order.
    pub fn to_text(&self) -> String {
        let rows = [
            ("total", self.total),
            ("reg_rgb_mse", self.reg_rgb_mse),
            ("reg_rgb_lpips", self.reg_rgb_lpips),
            ("reg_dep_l1", self.reg_dep_l1),
            ("reg_dep_gm", self.reg_dep_gm),
            ("nvs_rgb_mse", self.nvs_rgb_mse),
            ("nvs_rgb_lpips", self.nvs_rgb_lpips),
            ("nvs_alpha_mse", self.nvs_alpha_mse),
        ];
        rows.iter().map(|(k, v)| format!("{k}={v:.12e}\n")).collect()
    }
}

/// Subgradient of |x| that is zero at zero.
fn sign(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x.signum()
    }
}

/// Multi-scale gradient matching on one depth map, with its gradient
/// with respect to `pred`.
///
/// `R = pred - gt` on valid pixels. Each of the [`GM_SCALES`] levels halves
/// the previous one by 2x2 averaging (a block is valid only if all four
/// pixels are), and contributes the mean absolute forward difference over
/// valid horizontal pairs plus the same over valid vertical pairs.
pub fn loss_gm_with_grad(pred: &[f64], gt: &[f64], mask: &[bool], height: usize, width: usize) -> (f64, Vec<f64>) {
    gm_core(pred, gt, mask, height, width, &mut Vec::new())
}

fn gm_core(
    pred: &[f64],
    gt: &[f64],
    mask: &[bool],
    height: usize,
    width: usize,
    signs: &mut Vec<i8>,
) -> (f64, Vec<f64>) {
    assert_eq!(pred.len(), height * width);
    assert_eq!(gt.len(), height * width);
    assert_eq!(mask.len(), height * width);
    let mut residual: Vec<f64> = pred.iter().zip(gt).zip(mask).map(|((p, g), &m)| if m { p - g } else { 0.0 }).collect();
    let mut valid = mask.to_vec();
    let (mut h, mut w) = (height, width);
    // d level / d pred: each level pixel is the mean of a 2^s x 2^s block.
    let mut block = 1usize;
    let mut total = 0.0;
    let mut grad = vec![0.0; height * width];
    for scale in 0..GM_SCALES {
        if scale > 0 {
            let (h2, w2) = (h / 2, w / 2);
            let mut r2 = vec![0.0; h2 * w2];
            let mut v2 = vec![false; h2 * w2];
            for y in 0..h2 {
                for x in 0..w2 {
                    let idx = [(2 * y) * w + 2 * x, (2 * y) * w + 2 * x + 1, (2 * y + 1) * w + 2 * x, (2 * y + 1) * w + 2 * x + 1];
                    v2[y * w2 + x] = idx.iter().all(|&i| valid[i]);
                    r2[y * w2 + x] = idx.iter().map(|&i| residual[i]).sum::<f64>() / 4.0;
                }
            }
            residual = r2;
            valid = v2;
            h = h2;
            w = w2;
            block *= 2;
        }
        if h == 0 || w == 0 {
            break;
        }
        let spread = 1.0 / (block * block) as f64;
        let mut add_grad = |x: usize, y: usize, g: f64| {
            for yy in y * block..(y + 1) * block {
                for xx in x * block..(x + 1) * block {
                    grad[yy * width + xx] += g * spread;
                }
            }
        };
        for (dx, dy) in [(1usize, 0usize), (0, 1)] {
            let mut pairs = Vec::new();
            for y in 0..h.saturating_sub(dy) {
                for x in 0..w.saturating_sub(dx) {
                    let (a, b) = (y * w + x, (y + dy) * w + x + dx);
                    if valid[a] && valid[b] {
                        pairs.push((x, y, x + dx, y + dy, residual[b] - residual[a]));
                    }
                }
            }
            if pairs.is_empty() {
                continue;
            }
            let n = pairs.len() as f64;
            total += pairs.iter().map(|p| p.4.abs()).sum::<f64>() / n;
            for (x0, y0, x1, y1, d) in pairs {
                signs.push(sign(d) as i8);
                let s = sign(d) / n;
                add_grad(x1, y1, s);
                add_grad(x0, y0, -s);
            }
        }
    }
    (total, grad)
}

pub fn loss_gm(pred: &[f64], gt: &[f64], mask: &[bool], height: usize, width: usize) -> f64 {
    loss_gm_with_grad(pred, gt, mask, height, width).0
}

/// Signs of every absolute-value argument in the depth terms (L1
/// residuals, then gradient-matching differences per view). The regression
/// loss is smooth in `pred` wherever this pattern is constant.
pub fn reg_sign_pattern(pred: &ViewSet, gt: &ViewSet) -> Result<Vec<i8>> {
    pred.same_shape(gt)?;
    let mask = valid_depth_mask(gt);
    let mut signs: Vec<i8> = (0..pred.depth.len())
        .filter(|&k| mask[k])
        .map(|k| sign(pred.depth[k] - gt.depth[k]) as i8)
        .collect();
    let hw = pred.pixels_per_view();
    for view in 0..pred.num_views() {
        let r = view * hw..(view + 1) * hw;
        gm_core(&pred.depth[r.clone()], &gt.depth[r.clone()], &mask[r], pred.height, pred.width, &mut signs);
    }
    Ok(signs)
}

/// Gradient of a loss with respect to the raw channels of a [`ViewSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct ViewSetGradient {
    pub rgb: Vec<f64>,
    pub depth: Vec<f64>,
    pub opacity_raw: Vec<f64>,
    pub scale_raw: Vec<f64>,
    pub quat_raw: Vec<f64>,
}

impl ViewSetGradient {
    pub fn zeros_like(v: &ViewSet) -> Self {
        Self {
            rgb: vec![0.0; v.rgb.len()],
            depth: vec![0.0; v.depth.len()],
            opacity_raw: vec![0.0; v.opacity_raw.len()],
            scale_raw: vec![0.0; v.scale_raw.len()],
            quat_raw: vec![0.0; v.quat_raw.len()],
        }
    }
}

fn valid_depth_mask(gt: &ViewSet) -> Vec<bool> {
    gt.depth.iter().map(|&d| d > 0.0).collect()
}

/// Regression terms over the views, with their gradient on `pred`.
pub fn loss_reg_with_grad(pred: &ViewSet, gt: &ViewSet, w: &LossWeights) -> Result<(LossReport, ViewSetGradient)> {
    pred.same_shape(gt)?;
    w.validate()?;
    let mut grad = ViewSetGradient::zeros_like(pred);
    let n_rgb = pred.rgb.len() as f64;
    let mut rgb_mse = 0.0;
    for (k, (p, g)) in pred.rgb.iter().zip(&gt.rgb).enumerate() {
        let d = p - g;
        rgb_mse += d * d;
        grad.rgb[k] = 2.0 * d / n_rgb;
    }
    rgb_mse /= n_rgb;

    let mask = valid_depth_mask(gt);
    let n_valid = mask.iter().filter(|&&m| m).count();
    let mut l1 = 0.0;
    if n_valid > 0 {
        for k in 0..pred.depth.len() {
            if mask[k] {
                let d = pred.depth[k] - gt.depth[k];
                l1 += d.abs();
                grad.depth[k] = sign(d) / n_valid as f64;
            }
        }
        l1 /= n_valid as f64;
    }

    let hw = pred.pixels_per_view();
    let views = pred.num_views();
    let per_view: Vec<(f64, Vec<f64>)> = (0..views)
        .into_par_iter()
        .map(|view| {
            let r = view * hw..(view + 1) * hw;
            loss_gm_with_grad(&pred.depth[r.clone()], &gt.depth[r.clone()], &mask[r], pred.height, pred.width)
        })
        .collect();
    let mut gm = 0.0;
    for (view, (value, g)) in per_view.into_iter().enumerate() {
        gm += value / views as f64;
        for (k, gk) in g.into_iter().enumerate() {
            grad.depth[view * hw + k] += w.gm * gk / views as f64;
        }
    }

    let report = LossReport {
        reg_rgb_mse: rgb_mse,
        reg_dep_l1: l1,
        reg_dep_gm: gm,
        ..Default::default()
    };
    Ok((report.finish(w), grad))
}

/// RGB MSE, L1 depth on GT-valid pixels, multi-scale gradient matching
/// averaged over views, and a zero perceptual term.
pub fn loss_reg(pred: &ViewSet, gt: &ViewSet, w: &LossWeights) -> Result<LossReport> {
    Ok(loss_reg_with_grad(pred, gt, w)?.0)
}

/// Novel-view terms of `cloud` against reference renders at `cams`.
pub fn loss_nvs(
    cloud: &GaussianCloud,
    gt_renders: &[RenderOutput],
    cams: &[OrthoCamera],
    w: &LossWeights,
) -> Result<(LossReport, Gradients)> {
    w.validate()?;
    if gt_renders.len() != cams.len() || cams.is_empty() {
        return Err(Error::ShapeMismatch(format!("{} reference renders for {} cameras", gt_renders.len(), cams.len())));
    }
    let n_color: usize = gt_renders.iter().map(|r| r.color.len()).sum();
    let n_alpha: usize = gt_renders.iter().map(|r| r.alpha.len()).sum();
    let per_cam: Vec<Result<(f64, f64, Gradients)>> = cams
        .par_iter()
        .zip(gt_renders)
        .map(|(cam, gt)| {
            let img = render(cloud, cam)?;
            if (img.height, img.width) != (gt.height, gt.width) {
                return Err(Error::ShapeMismatch("reference render resolution differs from camera".into()));
            }
            let mut up = RenderOutput::zeros(img.height, img.width);
            let mut rgb = 0.0;
            for k in 0..img.color.len() {
                let d = img.color[k] - gt.color[k];
                rgb += d * d;
                up.color[k] = 2.0 * d / n_color as f64;
            }
            let mut alpha = 0.0;
            for k in 0..img.alpha.len() {
                let d = img.alpha[k] - gt.alpha[k];
                alpha += d * d;
                up.alpha[k] = 2.0 * d / n_alpha as f64;
            }
            Ok((rgb, alpha, render_backward(cloud, cam, &up)?))
        })
        .collect();
    let mut grads = Gradients::zeros(cloud.len());
    let (mut rgb, mut alpha) = (0.0, 0.0);
    for r in per_cam {
        let (a, b, g) = r?;
        rgb += a;
        alpha += b;
        grads.add_assign(&g);
    }
    let report = LossReport {
        nvs_rgb_mse: rgb / n_color as f64,
        nvs_alpha_mse: alpha / n_alpha as f64,
        ..Default::default()
    };
    Ok((report.finish(w), grads))
}

/// Reference renders of a cloud at the given cameras.
pub fn reference_renders(cloud: &GaussianCloud, cams: &[OrthoCamera]) -> Result<Vec<RenderOutput>> {
    cams.iter().map(|cam| render(cloud, cam)).collect()
}

/// Novel cameras for the objective: the view set's resolution and framing.
pub fn nvs_cameras(views: &ViewSet, w: &LossWeights, seed: u64) -> Result<Vec<OrthoCamera>> {
    let cam = views.cameras[0];
    sample_novel_cameras(w.nvs_views, seed, views.width, cam.half_extent, cam.plane_distance)
}

fn merge(reg: LossReport, nvs: LossReport, w: &LossWeights) -> LossReport {
    LossReport {
        nvs_rgb_mse: nvs.nvs_rgb_mse,
        nvs_rgb_lpips: nvs.nvs_rgb_lpips,
        nvs_alpha_mse: nvs.nvs_alpha_mse,
        ..reg
    }
    .finish(w)
}

/// Full objective and its gradient on every raw channel of `pred`.
/// Gaussians come from every pixel with positive predicted depth; the
/// reference is the GT views lifted the same way and rendered at `nvs_seed`
/// cameras.
pub fn objective_with_grad(
    pred: &ViewSet,
    gt: &ViewSet,
    w: &LossWeights,
    nvs_seed: u64,
) -> Result<(LossReport, ViewSetGradient)> {
    let (reg, mut grad) = loss_reg_with_grad(pred, gt, w)?;
    let cams = nvs_cameras(pred, w, nvs_seed)?;
    let reference = reference_renders(&build_pixel_gaussians(gt, 0.0)?, &cams)?;
    let cloud = build_pixel_gaussians(pred, 0.0)?;
    let (nvs, g) = loss_nvs(&cloud, &reference, &cams, w)?;

    for (i, src) in cloud.source.iter().enumerate() {
        let (view, u, v) = (src.view, src.u, src.v);
        let cam = &pred.cameras[view];
        for c in 0..3 {
            grad.rgb[pred.channel_index(3, view, c, u, v)] += g.color[i][c];
        }
        let p = pred.pixel_index(view, u, v);
        grad.depth[p] += g.center[i].dot(&cam.direction());
        let s = sigmoid(pred.opacity_raw[p]);
        grad.opacity_raw[p] += g.opacity[i] * s * (1.0 - s);
        let pitch = cam.pixel_pitch();
        for c in 0..3 {
            let k = pred.channel_index(3, view, c, u, v);
            grad.scale_raw[k] += g.scale[i][c] * scale_activation_grad(pred.scale_raw[k]) * pitch;
        }
        let q: [f64; 4] = std::array::from_fn(|c| pred.quat_raw[pred.channel_index(4, view, c, u, v)]);
        let norm = q.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 && norm.is_finite() {
            // The renderer's gradient is already tangent to the unit sphere.
            for c in 0..4 {
                grad.quat_raw[pred.channel_index(4, view, c, u, v)] += g.rotation[i][c] / norm;
            }
        }
    }
    Ok((merge(reg, nvs, w), grad))
}

/// Full objective value.
pub fn objective(pred: &ViewSet, gt: &ViewSet, w: &LossWeights, nvs_seed: u64) -> Result<LossReport> {
    let reg = loss_reg(pred, gt, w)?;
    let cams = nvs_cameras(pred, w, nvs_seed)?;
    let reference = reference_renders(&build_pixel_gaussians(gt, 0.0)?, &cams)?;
    let cloud = build_pixel_gaussians(pred, 0.0)?;
    let mut nvs = LossReport::default();
    let n_color: usize = reference.iter().map(|r| r.color.len()).sum();
    let n_alpha: usize = reference.iter().map(|r| r.alpha.len()).sum();
    for (cam, gt_img) in cams.iter().zip(&reference) {
        let img = render(&cloud, cam)?;
        nvs.nvs_rgb_mse += img.color.iter().zip(&gt_img.color).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        nvs.nvs_alpha_mse += img.alpha.iter().zip(&gt_img.alpha).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    nvs.nvs_rgb_mse /= n_color as f64;
    nvs.nvs_alpha_mse /= n_alpha as f64;
    Ok(merge(reg, nvs, w))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ramp_closed_form() {
        let (h, w) = (16, 16);
        let a = 0.3;
        let pred: Vec<f64> = (0..h * w).map(|i| 1.0 + a * (i % w) as f64).collect();
        let gt = vec![1.0; h * w];
        let gm = loss_gm(&pred, &gt, &vec![true; h * w], h, w);
        // Level s has stride 2^s: a + 2a + 4a + 8a.
        assert!((gm - 15.0 * a).abs() < 1e-12, "{gm}");
    }

    #[test]
    fn constant_offset_and_empty_mask() {
        let gt: Vec<f64> = (0..64).map(|i| (i as f64 * 0.7).sin() + 2.0).collect();
        let pred: Vec<f64> = gt.iter().map(|g| g + 0.25).collect();
        assert!(loss_gm(&pred, &gt, &vec![true; 64], 8, 8).abs() < 1e-12);
        let noisy: Vec<f64> = gt.iter().enumerate().map(|(i, g)| g + (i as f64).cos()).collect();
        assert_eq!(loss_gm(&noisy, &gt, &vec![false; 64], 8, 8), 0.0);
    }

    #[test]
    fn gm_gradient_matches_differences() {
        let (h, w) = (12, 10);
        let gt: Vec<f64> = (0..h * w).map(|i| (i as f64 * 0.31).cos()).collect();
        let pred: Vec<f64> = (0..h * w).map(|i| (i as f64 * 0.17).sin() * 0.5).collect();
        let mask: Vec<bool> = (0..h * w).map(|i| i % 7 != 3).collect();
        let (_, g) = loss_gm_with_grad(&pred, &gt, &mask, h, w);
        for k in 0..h * w {
            let step = 1e-6;
            let mut p = pred.clone();
            p[k] += step;
            let up = loss_gm(&p, &gt, &mask, h, w);
            p[k] -= 2.0 * step;
            let down = loss_gm(&p, &gt, &mask, h, w);
            assert!(((up - down) / (2.0 * step) - g[k]).abs() < 1e-6, "pixel {k}");
        }
    }
}
