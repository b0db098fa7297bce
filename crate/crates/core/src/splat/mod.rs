//! Orthographic Gaussian splatting: tile-binned front-to-back alpha
//! compositing with an analytic reverse pass.

mod backward;

use std::hash::{Hash, Hasher};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, UnitSphere};
use rayon::prelude::*;

use crate::camera::{default_up, Mat3, OrthoCamera, Vec3, ViewId};
use crate::error::{Error, Result};
use crate::gaussians::{normalize_quat, Gaussian3D, GaussianCloud};

pub use backward::{render_backward, Gradients};

pub const TILE: usize = 16;
/// Added to the diagonal of every projected covariance, in pixels squared.
pub const COV2D_REGULARIZER: f64 = 0.3;
pub const MAX_CONTRIBUTION: f64 = 0.999;
pub const MIN_TRANSMITTANCE: f64 = 1e-4;
/// Squared Mahalanobis radius beyond which a Gaussian contributes nothing.
pub const CUTOFF_SQ: f64 = 9.0;
const DEPTH_EPS: f64 = 1e-10;

/// Planar `3 x H x W` color, `H x W` alpha and expected ray depth.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderOutput {
    pub height: usize,
    pub width: usize,
    pub color: Vec<f64>,
    pub alpha: Vec<f64>,
    pub depth: Vec<f64>,
}

impl RenderOutput {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            color: vec![0.0; 3 * height * width],
            alpha: vec![0.0; height * width],
            depth: vec![0.0; height * width],
        }
    }

    pub fn rgb_at(&self, u: usize, v: usize) -> Vec3 {
        let hw = self.height * self.width;
        let i = v * self.width + u;
        Vec3::new(self.color[i], self.color[hw + i], self.color[2 * hw + i])
    }
}

/// Rotation matrix of a unit quaternion `(w, x, y, z)`.
pub fn quat_to_matrix(q: [f64; 4]) -> Mat3 {
    let [w, x, y, z] = q;
    Mat3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

/// Screen-space footprint of one Gaussian.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Splat {
    pub mean: [f64; 2],
    /// Inverse 2D covariance `[a, b, c]` of `[[a, b], [b, c]]`.
    pub conic: [f64; 3],
    pub t: f64,
    pub opacity: f64,
    pub color: Vec3,
    pub radius: f64,
}

/// Rows map world offsets to pixel offsets.
pub(crate) fn projection_rows(cam: &OrthoCamera) -> (Vec3, Vec3) {
    let pitch_y = 2.0 * cam.half_extent / cam.height as f64;
    (cam.right() / cam.pixel_pitch(), -cam.up() / pitch_y)
}

pub(crate) fn project_gaussian(g: &Gaussian3D, cam: &OrthoCamera) -> Option<Splat> {
    let p = cam.project(&g.center);
    if !(p.t > 0.0) {
        return None;
    }
    let r = quat_to_matrix(normalize_quat(g.rotation));
    let m = r * Mat3::from_diagonal(&g.scale);
    let sigma = m * m.transpose();
    let (pu, pv) = projection_rows(cam);
    let a = pu.dot(&(sigma * pu)) + COV2D_REGULARIZER;
    let b = pu.dot(&(sigma * pv));
    let c = pv.dot(&(sigma * pv)) + COV2D_REGULARIZER;
    let det = a * c - b * b;
    if !(det > 0.0) || !det.is_finite() {
        return None;
    }
    let mid = 0.5 * (a + c);
    let lambda_max = mid + (mid * mid - det).max(0.0).sqrt();
    Some(Splat {
        mean: [p.u, p.v],
        conic: [c / det, -b / det, a / det],
        t: p.t,
        opacity: g.opacity,
        color: g.color,
        radius: CUTOFF_SQ.sqrt() * lambda_max.sqrt(),
    })
}

impl Splat {
    /// Exponent `-d^T K d / 2` at pixel `(x, y)`, or `None` past the cutoff.
    #[inline]
    pub fn power(&self, x: f64, y: f64) -> Option<(f64, f64, f64)> {
        let dx = x - self.mean[0];
        let dy = y - self.mean[1];
        let [a, b, c] = self.conic;
        let q = a * dx * dx + 2.0 * b * dx * dy + c * dy * dy;
        (q <= CUTOFF_SQ).then_some((-0.5 * q, dx, dy))
    }
}

/// Projected Gaussians plus per-tile lists in global front-to-back order.
pub(crate) struct Binned {
    pub splats: Vec<Option<Splat>>,
    pub tiles: Vec<Vec<u32>>,
    pub tiles_x: usize,
}

pub(crate) fn bin(cloud: &GaussianCloud, cam: &OrthoCamera) -> Binned {
    let splats: Vec<Option<Splat>> = cloud.gaussians.par_iter().map(|g| project_gaussian(g, cam)).collect();
    let mut order: Vec<u32> = (0..splats.len() as u32).filter(|&i| splats[i as usize].is_some()).collect();
    order.sort_by(|&i, &j| {
        let (a, b) = (splats[i as usize].unwrap().t, splats[j as usize].unwrap().t);
        a.total_cmp(&b).then(i.cmp(&j))
    });
    let tiles_x = cam.width.div_ceil(TILE);
    let mut tiles = vec![Vec::new(); tiles_x * cam.height.div_ceil(TILE)];
    for &i in &order {
        let s = splats[i as usize].as_ref().unwrap();
        let Some((x0, x1)) = pixel_span(s.mean[0], s.radius, cam.width) else { continue };
        let Some((y0, y1)) = pixel_span(s.mean[1], s.radius, cam.height) else { continue };
        for ty in y0 / TILE..=y1 / TILE {
            for tx in x0 / TILE..=x1 / TILE {
                tiles[ty * tiles_x + tx].push(i);
            }
        }
    }
    Binned {
        splats,
        tiles,
        tiles_x,
    }
}

/// Inclusive pixel range covered by `[center - r, center + r]`.
fn pixel_span(center: f64, r: f64, n: usize) -> Option<(usize, usize)> {
    let lo = (center - r).ceil().max(0.0);
    let hi = (center + r).floor().min(n as f64 - 1.0);
    (lo <= hi).then_some((lo as usize, hi as usize))
}

/// One composited term of a pixel.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Contribution {
    pub index: u32,
    /// Position in the tile list.
    pub slot: usize,
    pub g: f64,
    /// Transmittance in front of this Gaussian.
    pub transmittance: f64,
    pub clamped: bool,
    pub power: f64,
    pub dx: f64,
    pub dy: f64,
}

/// Front-to-back compositing of one pixel; `visit` sees every term.
#[inline]
pub(crate) fn composite_pixel(
    binned: &Binned,
    list: &[u32],
    x: f64,
    y: f64,
    mut visit: impl FnMut(&Contribution),
) -> f64 {
    let mut trans = 1.0;
    for (slot, &i) in list.iter().enumerate() {
        let s = binned.splats[i as usize].as_ref().unwrap();
        let Some((power, dx, dy)) = s.power(x, y) else { continue };
        let raw = s.opacity * power.exp();
        let clamped = raw > MAX_CONTRIBUTION;
        let g = if clamped { MAX_CONTRIBUTION } else { raw };
        visit(&Contribution {
            index: i,
            slot,
            g,
            transmittance: trans,
            clamped,
            power,
            dx,
            dy,
        });
        trans *= 1.0 - g;
        if trans < MIN_TRANSMITTANCE {
            break;
        }
    }
    trans
}

fn check_inputs(cloud: &GaussianCloud) -> Result<()> {
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    Ok(())
}

/// Splats `cloud` into `cam`.
pub fn render(cloud: &GaussianCloud, cam: &OrthoCamera) -> Result<RenderOutput> {
    check_inputs(cloud)?;
    let binned = bin(cloud, cam);
    let (w, h) = (cam.width, cam.height);
    let tiles: Vec<Vec<(usize, [f64; 5])>> = (0..binned.tiles.len())
        .into_par_iter()
        .map(|tile| {
            let list = &binned.tiles[tile];
            let (tx, ty) = (tile % binned.tiles_x, tile / binned.tiles_x);
            let mut out = Vec::with_capacity(TILE * TILE);
            for y in ty * TILE..((ty + 1) * TILE).min(h) {
                for x in tx * TILE..((tx + 1) * TILE).min(w) {
                    let mut acc = [0.0; 5];
                    let trans = composite_pixel(&binned, list, x as f64, y as f64, |c| {
                        let s = binned.splats[c.index as usize].as_ref().unwrap();
                        let wgt = c.g * c.transmittance;
                        for k in 0..3 {
                            acc[k] += s.color[k] * wgt;
                        }
                        acc[3] += s.t * wgt;
                    });
                    acc[4] = 1.0 - trans;
                    out.push((y * w + x, acc));
                }
            }
            out
        })
        .collect();
    let mut img = RenderOutput::zeros(h, w);
    let hw = h * w;
    for (i, acc) in tiles.into_iter().flatten() {
        for k in 0..3 {
            img.color[k * hw + i] = acc[k];
        }
        img.alpha[i] = acc[4];
        img.depth[i] = acc[3] / acc[4].max(DEPTH_EPS);
    }
    Ok(img)
}

/// Fingerprint of the discrete rendering state: per pixel, the ordered
/// active Gaussians, their clamp flags and where compositing stopped.
/// Two parameter settings with equal signatures lie in the same smooth piece.
pub fn render_signature(cloud: &GaussianCloud, cam: &OrthoCamera) -> u64 {
    let binned = bin(cloud, cam);
    let mut hasher = std::collections::hash_map::DefaultHasher::new();
    for tile in 0..binned.tiles.len() {
        let list = &binned.tiles[tile];
        let (tx, ty) = (tile % binned.tiles_x, tile / binned.tiles_x);
        for y in ty * TILE..((ty + 1) * TILE).min(cam.height) {
            for x in tx * TILE..((tx + 1) * TILE).min(cam.width) {
                let mut n = 0usize;
                let trans = composite_pixel(&binned, list, x as f64, y as f64, |c| {
                    (c.index, c.clamped).hash(&mut hasher);
                    n += 1;
                });
                (x, y, n, trans < MIN_TRANSMITTANCE).hash(&mut hasher);
            }
        }
    }
    hasher.finish()
}

/// `count` orthographic cameras looking along uniformly random directions,
/// with image up from [`default_up`].
pub fn sample_novel_cameras(
    count: usize,
    seed: u64,
    resolution: usize,
    half_extent: f64,
    plane_distance: f64,
) -> Result<Vec<OrthoCamera>> {
    if count == 0 {
        return Err(Error::invalid("novel camera count must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|k| {
            let d = Vec3::from(UnitSphere.sample(&mut rng));
            OrthoCamera::looking(
                ViewId::Custom(k as u32),
                d,
                default_up(&d),
                plane_distance,
                half_extent,
                resolution,
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::make_six_view_rig;

    fn gaussian(center: Vec3, opacity: f64, scale: f64) -> Gaussian3D {
        Gaussian3D {
            center,
            color: Vec3::new(1.0, 0.5, 0.25),
            opacity,
            scale: Vec3::repeat(scale),
            rotation: [1.0, 0.0, 0.0, 0.0],
        }
    }

    fn cloud(gs: Vec<Gaussian3D>) -> GaussianCloud {
        GaussianCloud {
            gaussians: gs,
            source: Vec::new(),
        }
    }

    fn front(res: usize) -> OrthoCamera {
        make_six_view_rig(res, 1.0, 2.0).unwrap()[0]
    }

    #[test]
    fn isotropic_gaussian_is_symmetric() {
        let cam = front(33);
        let img = render(&cloud(vec![gaussian(Vec3::zeros(), 0.99, 0.2)]), &cam).unwrap();
        let a = |u: usize, v: usize| img.alpha[v * 33 + u];
        let (peak_u, peak_v) = (0..33 * 33)
            .map(|i| (i % 33, i / 33))
            .max_by(|&(u0, v0), &(u1, v1)| a(u0, v0).total_cmp(&a(u1, v1)))
            .unwrap();
        assert_eq!((peak_u, peak_v), (16, 16));
        for k in 1..8 {
            let r = a(16 + k, 16);
            for s in [a(16 - k, 16), a(16, 16 + k), a(16, 16 - k)] {
                assert!((r - s).abs() < 1e-12);
            }
        }
        assert!((img.depth[16 * 33 + 16] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn background_is_black() {
        let cam = front(32);
        let img = render(&cloud(vec![gaussian(Vec3::new(0.9, 0.9, 0.0), 0.9, 0.01)]), &cam).unwrap();
        assert_eq!(img.alpha[31 * 32], 0.0);
        assert_eq!(img.rgb_at(0, 31), Vec3::zeros());
    }

    #[test]
    fn two_layer_compositing() {
        // Center pixel of an odd image sits exactly on the axis: g = opacity.
        let cam = front(17);
        let c = cloud(vec![
            gaussian(Vec3::new(0.0, 0.0, 1.0), 0.5, 0.1),
            gaussian(Vec3::new(0.0, 0.0, 0.0), 0.5, 0.1),
        ]);
        let img = render(&c, &cam).unwrap();
        let i = 8 * 17 + 8;
        assert!((img.alpha[i] - 0.75).abs() < 1e-12);
        assert!((img.depth[i] - (1.0 * 0.5 + 2.0 * 0.25) / 0.75).abs() < 1e-12);
    }

    #[test]
    fn empty_cloud_rejected_and_behind_plane_skipped() {
        let cam = front(16);
        assert!(render(&GaussianCloud::default(), &cam).is_err());
        let img = render(&cloud(vec![gaussian(Vec3::new(0.0, 0.0, 2.5), 0.9, 0.2)]), &cam).unwrap();
        assert!(img.alpha.iter().all(|&a| a == 0.0));
    }

    #[test]
    fn alpha_below_one_and_monotone() {
        let cam = front(24);
        let mut gs = Vec::new();
        let mut prev = vec![0.0; 24 * 24];
        for k in 0..12 {
            gs.push(gaussian(Vec3::new(0.01 * k as f64, 0.0, 0.5 - 0.05 * k as f64), 0.99, 0.3));
            let img = render(&cloud(gs.clone()), &cam).unwrap();
            for (a, p) in img.alpha.iter().zip(&prev) {
                assert!(*a < 1.0);
                assert!(*a >= *p - 1e-15);
            }
            prev = img.alpha;
        }
    }

    #[test]
    fn thread_count_independent() {
        let cam = front(40);
        let gs: Vec<Gaussian3D> = (0..200)
            .map(|k| {
                let f = k as f64 * 0.61803;
                gaussian(Vec3::new(f.sin() * 0.8, (2.0 * f).cos() * 0.8, (3.0 * f).sin() * 0.8), 0.7, 0.05)
            })
            .collect();
        let c = cloud(gs);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| render(&c, &cam).unwrap());
        let b = four.install(|| render(&c, &cam).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn novel_cameras() {
        let a = sample_novel_cameras(10, 3, 16, 1.0, 2.0).unwrap();
        assert_eq!(a.len(), 10);
        assert_eq!(a, sample_novel_cameras(10, 3, 16, 1.0, 2.0).unwrap());
        assert_eq!(sample_novel_cameras(1, 3, 16, 1.0, 2.0).unwrap().len(), 1);
        assert!(sample_novel_cameras(0, 3, 16, 1.0, 2.0).is_err());
    }

    #[test]
    fn quaternion_matrix_is_rotation() {
        let q = normalize_quat([0.3, -0.4, 0.5, 0.7]);
        let r = quat_to_matrix(q);
        assert!((r * r.transpose() - Mat3::identity()).abs().max() < 1e-12);
        assert!((r.determinant() - 1.0).abs() < 1e-12);
        let na = nalgebra::UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(q[0], q[1], q[2], q[3]));
        assert!((na.to_rotation_matrix().into_inner() - r).abs().max() < 1e-12);
    }
}
