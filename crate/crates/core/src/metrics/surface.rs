use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::camera::Vec3;
use crate::error::{Error, Result};
use crate::recon::TriMesh;
use crate::spatial::KdTree;

pub const CHAMFER_SAMPLES: usize = 16_384;
pub const CHAMFER_SEED: u64 = 0x00C4_A3FE;

/// Area-weighted uniform samples on the surface of `mesh`.
pub fn sample_mesh_surface(mesh: &TriMesh, n: usize, seed: u64) -> Result<Vec<Vec3>> {
    if mesh.faces.is_empty() {
        return Err(Error::Empty("mesh has no faces".into()));
    }
    let mut cdf = Vec::with_capacity(mesh.faces.len());
    let mut acc = 0.0;
    for f in 0..mesh.faces.len() {
        acc += mesh.face_area(f);
        cdf.push(acc);
    }
    if !(acc > 0.0) {
        return Err(Error::Degenerate("mesh has zero surface area".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|_| {
            let pick = rng.gen_range(0.0..acc);
            let f = cdf.partition_point(|&c| c <= pick).min(cdf.len() - 1);
            let [a, b, c] = mesh.corners(f);
            let (r1, r2): (f64, f64) = (rng.gen(), rng.gen());
            let s = r1.sqrt();
            a * (1.0 - s) + b * (s * (1.0 - r2)) + c * (s * r2)
        })
        .collect())
}

/// Mean distance from each point of `from` to its nearest point in `tree`.
pub fn mean_nearest_distance(from: &[Vec3], tree: &KdTree) -> f64 {
    let d: Vec<f64> = from.par_iter().map(|p| tree.nearest(p).map_or(f64::INFINITY, |n| n.dist_sq.sqrt())).collect();
    d.iter().sum::<f64>() / d.len() as f64
}

/// Symmetric Chamfer distance between point sets, with unsquared distances.
pub fn chamfer_points(a: &[Vec3], b: &[Vec3]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("Chamfer distance of an empty point set".into()));
    }
    let ta = KdTree::new(a);
    let tb = KdTree::new(b);
    Ok(0.5 * (mean_nearest_distance(a, &tb) + mean_nearest_distance(b, &ta)))
}

/// Chamfer distance between two meshes from `samples` seeded surface
/// samples each. Both meshes use the same seed.
pub fn chamfer_distance(a: &TriMesh, b: &TriMesh, samples: usize) -> Result<f64> {
    if samples == 0 {
        return Err(Error::invalid("Chamfer distance needs at least one sample"));
    }
    let pa = sample_mesh_surface(a, samples, CHAMFER_SEED)?;
    let pb = sample_mesh_surface(b, samples, CHAMFER_SEED)?;
    chamfer_points(&pa, &pb)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(z: f64) -> TriMesh {
        TriMesh {
            vertices: vec![
                Vec3::new(0.0, 0.0, z),
                Vec3::new(1.0, 0.0, z),
                Vec3::new(1.0, 1.0, z),
                Vec3::new(0.0, 1.0, z),
            ],
            faces: vec![[0, 1, 2], [0, 2, 3]],
            vertex_colors: vec![Vec3::zeros(); 4],
        }
    }

    #[test]
    fn samples_lie_on_the_surface() {
        let pts = sample_mesh_surface(&square(0.3), 1000, 1).unwrap();
        assert!(pts.iter().all(|p| (p.z - 0.3).abs() < 1e-15 && (-1e-15..=1.0 + 1e-15).contains(&p.x) && (-1e-15..=1.0 + 1e-15).contains(&p.y)));
        let mean_x = pts.iter().map(|p| p.x).sum::<f64>() / 1000.0;
        assert!((mean_x - 0.5).abs() < 0.03);
    }

    #[test]
    fn identical_and_symmetric() {
        let a = square(0.0);
        let b = square(0.05);
        assert_eq!(chamfer_distance(&a, &a, 2048).unwrap(), 0.0);
        assert_eq!(chamfer_distance(&a, &b, 2048).unwrap(), chamfer_distance(&b, &a, 2048).unwrap());
        let empty = TriMesh {
            vertices: vec![],
            faces: vec![],
            vertex_colors: vec![],
        };
        assert!(chamfer_distance(&a, &empty, 10).is_err());
    }
}
