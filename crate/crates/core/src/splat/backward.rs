use rayon::prelude::*;

use super::{bin, check_inputs, composite_pixel, projection_rows, quat_to_matrix, Contribution, RenderOutput, DEPTH_EPS, TILE};
use crate::camera::{Mat3, OrthoCamera, Vec3};
use crate::error::{Error, Result};
use crate::gaussians::{normalize_quat, GaussianCloud};

/// Per-Gaussian partial derivatives of a scalar loss. `scale` is with
/// respect to world-unit scales; `rotation` is with respect to the stored
/// quaternion components (through normalization).
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub center: Vec<Vec3>,
    pub color: Vec<Vec3>,
    pub opacity: Vec<f64>,
    pub scale: Vec<Vec3>,
    pub rotation: Vec<[f64; 4]>,
}

impl Gradients {
    pub fn zeros(n: usize) -> Self {
        Self {
            center: vec![Vec3::zeros(); n],
            color: vec![Vec3::zeros(); n],
            opacity: vec![0.0; n],
            scale: vec![Vec3::zeros(); n],
            rotation: vec![[0.0; 4]; n],
        }
    }

    pub fn len(&self) -> usize {
        self.center.len()
    }

    pub fn is_empty(&self) -> bool {
        self.center.is_empty()
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for i in 0..self.len() {
            self.center[i] += other.center[i];
            self.color[i] += other.color[i];
            self.opacity[i] += other.opacity[i];
            self.scale[i] += other.scale[i];
            for k in 0..4 {
                self.rotation[i][k] += other.rotation[i][k];
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        (0..self.len()).all(|i| {
            self.center[i].iter().all(|x| x.is_finite())
                && self.color[i].iter().all(|x| x.is_finite())
                && self.opacity[i].is_finite()
                && self.scale[i].iter().all(|x| x.is_finite())
                && self.rotation[i].iter().all(|x| x.is_finite())
        })
    }
}

/// Screen-space partials: mean (2), conic (3), opacity, color (3), depth.
type Partial = [f64; 10];

/// Reverse pass of [`super::render`] for upstream gradients on color,
/// alpha and depth (same layout as the forward output).
pub fn render_backward(cloud: &GaussianCloud, cam: &OrthoCamera, upstream: &RenderOutput) -> Result<Gradients> {
    check_inputs(cloud)?;
    let (w, h) = (cam.width, cam.height);
    if upstream.width != w || upstream.height != h {
        return Err(Error::ShapeMismatch(format!(
            "upstream {}x{} vs camera {}x{}",
            upstream.width, upstream.height, w, h
        )));
    }
    let binned = bin(cloud, cam);
    let hw = w * h;

    let tile_partials: Vec<Vec<Partial>> = (0..binned.tiles.len())
        .into_par_iter()
        .map(|tile| {
            let list = &binned.tiles[tile];
            let mut acc = vec![[0.0; 10]; list.len()];
            let (tx, ty) = (tile % binned.tiles_x, tile / binned.tiles_x);
            let mut terms: Vec<Contribution> = Vec::new();
            for y in ty * TILE..((ty + 1) * TILE).min(h) {
                for x in tx * TILE..((tx + 1) * TILE).min(w) {
                    let i = y * w + x;
                    let d_color = Vec3::new(upstream.color[i], upstream.color[hw + i], upstream.color[2 * hw + i]);
                    let (d_alpha, d_depth) = (upstream.alpha[i], upstream.depth[i]);
                    if d_color == Vec3::zeros() && d_alpha == 0.0 && d_depth == 0.0 {
                        continue;
                    }
                    terms.clear();
                    let trans = composite_pixel(&binned, list, x as f64, y as f64, |c| terms.push(*c));
                    let alpha = 1.0 - trans;
                    let depth_num: f64 = terms
                        .iter()
                        .map(|c| binned.splats[c.index as usize].unwrap().t * c.g * c.transmittance)
                        .sum();
                    let d_num = d_depth / alpha.max(DEPTH_EPS);
                    let d_alpha = if alpha > DEPTH_EPS {
                        d_alpha - d_depth * depth_num / (alpha * alpha)
                    } else {
                        d_alpha
                    };
                    // Suffix sum of psi_i * w_i behind the current term.
                    let mut behind = 0.0;
                    for c in terms.iter().rev() {
                        let s = binned.splats[c.index as usize].as_ref().unwrap();
                        let weight = c.g * c.transmittance;
                        let psi = d_color.dot(&s.color) + d_num * s.t + d_alpha;
                        let d_g = psi * c.transmittance - behind / (1.0 - c.g);
                        behind += psi * weight;
                        let p = &mut acc[c.slot];
                        for k in 0..3 {
                            p[6 + k] += d_color[k] * weight;
                        }
                        p[9] += d_num * weight;
                        if c.clamped {
                            continue;
                        }
                        p[5] += d_g * c.power.exp();
                        let d_power = d_g * c.g;
                        let [a, b, cc] = s.conic;
                        p[0] += d_power * (a * c.dx + b * c.dy);
                        p[1] += d_power * (b * c.dx + cc * c.dy);
                        p[2] += d_power * -0.5 * c.dx * c.dx;
                        p[3] += d_power * -c.dx * c.dy;
                        p[4] += d_power * -0.5 * c.dy * c.dy;
                    }
                }
            }
            acc
        })
        .collect();

    let n = cloud.len();
    let mut partials = vec![[0.0; 10]; n];
    for (tile, acc) in tile_partials.iter().enumerate() {
        for (slot, p) in acc.iter().enumerate() {
            let dst = &mut partials[binned.tiles[tile][slot] as usize];
            for k in 0..10 {
                dst[k] += p[k];
            }
        }
    }

    let (pu, pv) = projection_rows(cam);
    let dir = cam.direction();
    let per: Vec<(Vec3, Vec3, f64, Vec3, [f64; 4])> = (0..n)
        .into_par_iter()
        .map(|i| {
            let p = &partials[i];
            let Some(s) = binned.splats[i].as_ref() else {
                return (Vec3::zeros(), Vec3::zeros(), 0.0, Vec3::zeros(), [0.0; 4]);
            };
            let g = &cloud.gaussians[i];
            let d_center = pu * p[0] + pv * p[1] + dir * p[9];
            let d_color = Vec3::new(p[6], p[7], p[8]);

            let [a, b, c] = s.conic;
            let k = nalgebra::Matrix2::new(a, b, b, c);
            let g_k = nalgebra::Matrix2::new(p[2], 0.5 * p[3], 0.5 * p[3], p[4]);
            let g2 = -(k * g_k * k);
            let rows = [pu, pv];
            let mut g3 = Mat3::zeros();
            for r in 0..2 {
                for q in 0..2 {
                    g3 += rows[r] * rows[q].transpose() * g2[(r, q)];
                }
            }
            let qn = normalize_quat(g.rotation);
            let rot = quat_to_matrix(qn);
            let m = rot * Mat3::from_diagonal(&g.scale);
            let g_m = 2.0 * g3 * m;
            let d_scale = Vec3::from_fn(|kk, _| (0..3).map(|ii| g_m[(ii, kk)] * rot[(ii, kk)]).sum());
            let g_r = Mat3::from_fn(|ii, kk| g_m[(ii, kk)] * g.scale[kk]);
            let d_rotation = quat_backward(g.rotation, qn, &g_r);
            (d_center, d_color, p[5], d_scale, d_rotation)
        })
        .collect();

    let mut grads = Gradients::zeros(n);
    for (i, (dc, dcol, dop, ds, dq)) in per.into_iter().enumerate() {
        grads.center[i] = dc;
        grads.color[i] = dcol;
        grads.opacity[i] = dop;
        grads.scale[i] = ds;
        grads.rotation[i] = dq;
    }
    Ok(grads)
}

/// Chains `dL/dR` through the rotation matrix and quaternion normalization.
fn quat_backward(raw: [f64; 4], q: [f64; 4], g_r: &Mat3) -> [f64; 4] {
    let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return [0.0; 4];
    }
    let [w, x, y, z] = q;
    let dr = [
        Mat3::new(0.0, -2.0 * z, 2.0 * y, 2.0 * z, 0.0, -2.0 * x, -2.0 * y, 2.0 * x, 0.0),
        Mat3::new(0.0, 2.0 * y, 2.0 * z, 2.0 * y, -4.0 * x, -2.0 * w, 2.0 * z, 2.0 * w, -4.0 * x),
        Mat3::new(-4.0 * y, 2.0 * x, 2.0 * w, 2.0 * x, 0.0, 2.0 * z, -2.0 * w, 2.0 * z, -4.0 * y),
        Mat3::new(-4.0 * z, -2.0 * w, 2.0 * x, 2.0 * w, -4.0 * z, 2.0 * y, 2.0 * x, 2.0 * y, 0.0),
    ];
    let d_unit: [f64; 4] = std::array::from_fn(|k| g_r.component_mul(&dr[k]).sum());
    let along: f64 = (0..4).map(|k| d_unit[k] * q[k]).sum();
    std::array::from_fn(|k| (d_unit[k] - q[k] * along) / norm)
}
