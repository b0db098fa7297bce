use nalgebra::{Quaternion, SymmetricEigen, UnitQuaternion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::camera::{Mat3, Vec3};
use crate::error::{Error, Result};
use crate::spatial::KdTree;

/// `p -> R * diag(s) * p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityTransform {
    pub scale: Vec3,
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl Default for SimilarityTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl SimilarityTransform {
    pub fn identity() -> Self {
        Self {
            scale: Vec3::new(1.0, 1.0, 1.0),
            rotation: Mat3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation * p.component_mul(&self.scale) + self.translation
    }

    pub fn apply_all(&self, pts: &[Vec3]) -> Vec<Vec3> {
        pts.iter().map(|p| self.apply(p)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IcpOptions {
    pub iterations: usize,
    /// Stop once the RMS residual changes by less than this.
    pub tolerance: f64,
    /// Extra seeded starting rotations beyond the 24 axis-aligned ones.
    pub random_starts: usize,
    /// Points and iterations used to score every start.
    pub probe_points: usize,
    pub probe_iterations: usize,
    /// Best-scoring starts refined further before the final run.
    pub finalists: usize,
}

impl Default for IcpOptions {
    fn default() -> Self {
        Self {
            iterations: 200,
            tolerance: 1e-6,
            random_starts: 360,
            probe_points: 256,
            probe_iterations: 6,
            finalists: 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IcpResult {
    pub transform: SimilarityTransform,
    pub rms: f64,
    pub iterations: usize,
}

fn centroid(pts: &[Vec3]) -> Vec3 {
    pts.iter().fold(Vec3::zeros(), |a, p| a + p) / pts.len() as f64
}

fn covariance(pts: &[Vec3]) -> Mat3 {
    let c = centroid(pts);
    pts.iter().fold(Mat3::zeros(), |a, p| a + (p - c) * (p - c).transpose()) / pts.len() as f64
}

fn check_rank(pts: &[Vec3], what: &str) -> Result<()> {
    if pts.len() < 4 {
        return Err(Error::Degenerate(format!("{what}: {} points, need at least 4", pts.len())));
    }
    let eig = SymmetricEigen::new(covariance(pts)).eigenvalues;
    let (lo, hi) = (eig.min(), eig.max());
    if !(hi > 0.0) || lo <= 1e-10 * hi {
        return Err(Error::Degenerate(format!("{what}: points are coplanar or collinear")));
    }
    Ok(())
}

/// The 24 rotations mapping coordinate axes to signed coordinate axes.
pub fn cube_rotations() -> Vec<Mat3> {
    let mut out = Vec::with_capacity(24);
    for perm in [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]] {
        for signs in 0..8 {
            let mut m = Mat3::zeros();
            for r in 0..3 {
                m[(r, perm[r])] = if signs >> r & 1 == 1 { -1.0 } else { 1.0 };
            }
            if m.determinant() > 0.0 {
                out.push(m);
            }
        }
    }
    out
}

/// Best `R, s, t` for fixed correspondences `src[i] -> dst[i]`, alternating
/// Procrustes for `R` with per-axis least squares for `s` and `t`.
fn fit(src: &[Vec3], dst: &[Vec3], start: &SimilarityTransform) -> SimilarityTransform {
    let (cs, cd) = (centroid(src), centroid(dst));
    let ps: Vec<Vec3> = src.iter().map(|p| p - cs).collect();
    let qs: Vec<Vec3> = dst.iter().map(|q| q - cd).collect();
    let denom = Vec3::from_fn(|k, _| ps.iter().map(|p| p[k] * p[k]).sum::<f64>());
    let mut scale = start.scale;
    let mut rotation = start.rotation;
    for _ in 0..8 {
        let h = ps.iter().zip(&qs).fold(Mat3::zeros(), |a, (p, q)| a + p.component_mul(&scale) * q.transpose());
        let svd = h.svd(true, true);
        let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
        let v = vt.transpose();
        let d = (v * u.transpose()).determinant().signum();
        rotation = v * Mat3::from_diagonal(&Vec3::new(1.0, 1.0, d)) * u.transpose();
        let num = ps.iter().zip(&qs).fold(Vec3::zeros(), |a, (p, q)| a + p.component_mul(&(rotation.transpose() * q)));
        let next = Vec3::from_fn(|k, _| if denom[k] > 0.0 { (num[k] / denom[k]).max(1e-6) } else { 1.0 });
        let change = (next - scale).abs().max();
        scale = next;
        if change < 1e-14 {
            break;
        }
    }
    let translation = cd - rotation * cs.component_mul(&scale);
    SimilarityTransform {
        scale,
        rotation,
        translation,
    }
}

fn rms_and_matches(src: &[Vec3], tree: &KdTree, tf: &SimilarityTransform) -> (f64, Vec<Vec3>) {
    let pairs: Vec<(f64, Vec3)> = src
        .par_iter()
        .map(|p| {
            let n = tree.nearest(&tf.apply(p)).unwrap();
            (n.dist_sq, tree.point(n.index))
        })
        .collect();
    let rms = (pairs.iter().map(|p| p.0).sum::<f64>() / src.len() as f64).sqrt();
    (rms, pairs.into_iter().map(|p| p.1).collect())
}

fn iterate(src: &[Vec3], tree: &KdTree, mut tf: SimilarityTransform, iterations: usize, tolerance: f64) -> IcpResult {
    let (mut rms, mut matches) = rms_and_matches(src, tree, &tf);
    let mut done = 0;
    for it in 0..iterations {
        let next = fit(src, &matches, &tf);
        let (next_rms, next_matches) = rms_and_matches(src, tree, &next);
        done = it + 1;
        let change = (rms - next_rms).abs();
        if next_rms <= rms {
            tf = next;
            rms = next_rms;
            matches = next_matches;
        } else {
            break;
        }
        if change < tolerance {
            break;
        }
    }
    IcpResult {
        transform: tf,
        rms,
        iterations: done,
    }
}

/// Initial transform mapping `src` onto `dst` under `rotation` by matching
/// centroids and per-axis extents.
fn extent_start(src: &[Vec3], dst: &[Vec3], rotation: Mat3) -> SimilarityTransform {
    let (cs, cd) = (centroid(src), centroid(dst));
    let spread = |pts: &[Vec3], c: Vec3, m: &Mat3| {
        Vec3::from_fn(|k, _| (pts.iter().map(|p| (m * (p - c))[k].powi(2)).sum::<f64>() / pts.len() as f64).sqrt())
    };
    let ss = spread(src, cs, &Mat3::identity());
    let sd = spread(dst, cd, &rotation.transpose());
    let scale = Vec3::from_fn(|k, _| if ss[k] > 0.0 { sd[k] / ss[k] } else { 1.0 });
    SimilarityTransform {
        scale,
        rotation,
        translation: cd - rotation * cs.component_mul(&scale),
    }
}

fn subsample(pts: &[Vec3], n: usize) -> Vec<Vec3> {
    if pts.len() <= n {
        return pts.to_vec();
    }
    (0..n).map(|i| pts[i * pts.len() / n]).collect()
}

/// Deterministic starting rotations: the axis-aligned ones, then seeded
/// uniform samples.
fn start_rotations(extra: usize) -> Vec<Mat3> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x1C9_5EED);
    let mut out = cube_rotations();
    for _ in 0..extra {
        let q: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
        let q = UnitQuaternion::from_quaternion(Quaternion::new(q[0], q[1], q[2], q[3]));
        out.push(*q.to_rotation_matrix().matrix());
    }
    out
}

fn best_of(results: &[IcpResult], keep: usize) -> Vec<SimilarityTransform> {
    let mut order: Vec<usize> = (0..results.len()).collect();
    order.sort_by(|&a, &b| results[a].rms.total_cmp(&results[b].rms).then(a.cmp(&b)));
    order.into_iter().take(keep.max(1)).map(|i| results[i].transform).collect()
}

/// Scale-adaptive ICP with per-axis scale, which is non-convex: every
/// starting rotation is scored by a short run on a subsample, the best
/// `finalists` are refined on a larger subsample, and the winner is
/// iterated to convergence on all points. The result never has a larger
/// RMS nearest-neighbour residual than the identity.
pub fn scale_adaptive_icp(src: &[Vec3], dst: &[Vec3], options: &IcpOptions) -> Result<IcpResult> {
    check_rank(src, "source")?;
    check_rank(dst, "target")?;
    let tree = KdTree::new(dst);
    let probe = subsample(src, options.probe_points.max(4));
    let scored: Vec<IcpResult> = start_rotations(options.random_starts)
        .into_par_iter()
        .map(|r| iterate(&probe, &tree, extent_start(src, dst, r), options.probe_iterations, 0.0))
        .collect();
    let refine = subsample(src, 4 * options.probe_points.max(4));
    let refined: Vec<IcpResult> = best_of(&scored, options.finalists)
        .into_par_iter()
        .map(|tf| iterate(&refine, &tree, tf, 5 * options.probe_iterations, 0.0))
        .collect();
    let best = best_of(&refined, 1)[0];
    let result = iterate(src, &tree, best, options.iterations, options.tolerance);
    let identity = rms_and_matches(src, &tree, &SimilarityTransform::identity()).0;
    if result.rms > identity {
        return Ok(IcpResult {
            transform: SimilarityTransform::identity(),
            rms: identity,
            iterations: result.iterations,
        });
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cube_rotations_are_proper_and_distinct() {
        let rs = cube_rotations();
        assert_eq!(rs.len(), 24);
        for (i, a) in rs.iter().enumerate() {
            assert!((a.determinant() - 1.0).abs() < 1e-12);
            for b in &rs[..i] {
                assert!((a - b).abs().max() > 0.5);
            }
        }
    }

    #[test]
    fn exact_fit_recovers_parameters() {
        let src: Vec<Vec3> = (0..50).map(|i| Vec3::new((i as f64).sin(), (i as f64 * 1.7).cos(), (i as f64 * 0.3).sin() * 2.0)).collect();
        let truth = SimilarityTransform {
            scale: Vec3::new(1.2, 0.8, 1.05),
            rotation: *nalgebra::Rotation3::from_euler_angles(0.3, -0.2, 0.5).matrix(),
            translation: Vec3::new(0.1, -0.3, 0.2),
        };
        let dst = truth.apply_all(&src);
        let got = fit(&src, &dst, &SimilarityTransform::identity());
        assert!((got.scale - truth.scale).abs().max() < 1e-6);
        assert!((got.rotation - truth.rotation).abs().max() < 1e-6);
    }

    #[test]
    fn coplanar_rejected() {
        let flat: Vec<Vec3> = (0..20).map(|i| Vec3::new(i as f64, (i * i) as f64, 0.0)).collect();
        assert!(scale_adaptive_icp(&flat, &flat, &IcpOptions::default()).is_err());
    }
}
