use rayon::prelude::*;

use super::{OrientedPointCloud, TriMesh};
use crate::camera::Vec3;
use crate::spatial::KdTree;

pub const COLOR_NEIGHBORS: usize = 8;

/// Uniform-weight (umbrella) Laplacian smoothing, all vertices updated
/// simultaneously each iteration. Isolated vertices stay put.
pub fn laplacian_smooth(mesh: &TriMesh, iterations: usize, lambda: f64) -> TriMesh {
    let mut out = mesh.clone();
    if iterations == 0 {
        return out;
    }
    let nbrs = mesh.vertex_neighbors();
    let mut next = out.vertices.clone();
    for _ in 0..iterations {
        let cur = &out.vertices;
        next.par_iter_mut().enumerate().for_each(|(i, dst)| {
            let ns = &nbrs[i];
            if ns.is_empty() {
                *dst = cur[i];
                return;
            }
            let mean = ns.iter().fold(Vec3::zeros(), |acc, &j| acc + cur[j as usize]) / ns.len() as f64;
            *dst = cur[i] + (mean - cur[i]) * lambda;
        });
        std::mem::swap(&mut out.vertices, &mut next);
    }
    out
}

/// Inverse-distance-weighted color of the `k = 8` nearest cloud points.
pub fn colorize_vertices(mesh: &TriMesh, cloud: &OrientedPointCloud) -> TriMesh {
    let mut out = mesh.clone();
    if cloud.is_empty() {
        return out;
    }
    let tree = KdTree::new(&cloud.positions);
    out.vertex_colors = mesh
        .vertices
        .par_iter()
        .map(|v| {
            let nbrs = tree.k_nearest(v, COLOR_NEIGHBORS);
            if let Some(hit) = nbrs.iter().find(|n| n.dist_sq == 0.0) {
                return cloud.colors[hit.index];
            }
            let mut acc = Vec3::zeros();
            let mut wsum = 0.0;
            for n in &nbrs {
                let w = 1.0 / n.dist_sq.sqrt();
                acc += cloud.colors[n.index] * w;
                wsum += w;
            }
            acc / wsum
        })
        .collect();
    out
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Drops connected components (by shared vertices) holding fewer than
/// `min_fraction` of all faces. The largest component is always kept and
/// unreferenced vertices are removed.
pub fn remove_small_components(mesh: &TriMesh, min_fraction: f64) -> TriMesh {
    let nv = mesh.vertices.len();
    let mut parent: Vec<usize> = (0..nv).collect();
    let mut union = |a: usize, b: usize| {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
        }
    };
    for f in &mesh.faces {
        union(f[0] as usize, f[1] as usize);
        union(f[1] as usize, f[2] as usize);
    }
    let mut face_count = vec![0usize; nv];
    let roots: Vec<usize> = mesh
        .faces
        .iter()
        .map(|f| {
            let r = find(&mut parent, f[0] as usize);
            face_count[r] += 1;
            r
        })
        .collect();
    let total = mesh.faces.len();
    let Some(largest) = (0..nv).max_by_key(|&r| (face_count[r], std::cmp::Reverse(r))) else {
        return mesh.clone();
    };
    let threshold = min_fraction * total as f64;
    let keep_root = |r: usize| r == largest || face_count[r] as f64 >= threshold;

    let mut remap = vec![u32::MAX; nv];
    let mut out = TriMesh::default();
    let has_colors = mesh.vertex_colors.len() == nv;
    for (f, &r) in mesh.faces.iter().zip(&roots) {
        if !keep_root(r) {
            continue;
        }
        let face = f.map(|v| {
            let v = v as usize;
            if remap[v] == u32::MAX {
                remap[v] = out.vertices.len() as u32;
                out.vertices.push(mesh.vertices[v]);
                if has_colors {
                    out.vertex_colors.push(mesh.vertex_colors[v]);
                }
            }
            remap[v]
        });
        out.faces.push(face);
    }
    if !has_colors {
        out.vertex_colors = vec![Vec3::zeros(); out.vertices.len()];
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recon::marching_cubes::{marching_cubes, ScalarGrid};
    use rand::{Rng, SeedableRng};

    fn sphere_mesh(n: usize, r: f64, center: Vec3) -> TriMesh {
        let h = 2.0 * (r + 0.1) / (n - 1) as f64;
        let grid = ScalarGrid::from_fn([n, n, n], center - Vec3::repeat(r + 0.1), h, |p| (p - center).norm() - r);
        marching_cubes(&grid, 0.0)
    }

    fn merge(a: &TriMesh, b: &TriMesh) -> TriMesh {
        let mut out = a.clone();
        let off = a.vertices.len() as u32;
        out.vertices.extend(&b.vertices);
        out.vertex_colors.extend(&b.vertex_colors);
        out.faces.extend(b.faces.iter().map(|f| f.map(|v| v + off)));
        out
    }

    #[test]
    fn zero_iterations_is_identity() {
        let m = sphere_mesh(12, 0.5, Vec3::zeros());
        assert_eq!(laplacian_smooth(&m, 0, 0.5), m);
    }

    #[test]
    fn umbrella_shrinks_convex_mesh() {
        let m = sphere_mesh(16, 0.5, Vec3::zeros());
        let s = laplacian_smooth(&m, 1, 0.5);
        assert_eq!(s.faces, m.faces);
        let before: f64 = m.vertices.iter().map(|v| v.norm()).sum();
        let after: f64 = s.vertices.iter().map(|v| v.norm()).sum();
        assert!(after < before);
    }

    #[test]
    fn smoothing_reduces_radial_noise() {
        let mut m = sphere_mesh(40, 0.8, Vec3::zeros());
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let normal = rand_distr::Normal::new(0.0, 0.01).unwrap();
        for v in &mut m.vertices {
            let r = v.norm();
            *v *= (r + rng.sample(normal)) / r;
        }
        let rms = |mesh: &TriMesh| {
            (mesh.vertices.iter().map(|v| (v.norm() - 0.8).powi(2)).sum::<f64>() / mesh.vertices.len() as f64).sqrt()
        };
        let s = laplacian_smooth(&m, 10, 0.5);
        assert!(rms(&s) < rms(&m), "{} -> {}", rms(&m), rms(&s));
    }

    #[test]
    fn floater_removed_equal_parts_kept() {
        let big = sphere_mesh(30, 0.8, Vec3::zeros());
        let small = sphere_mesh(6, 0.05, Vec3::new(1.0, 0.0, 0.0));
        assert!((small.faces.len() as f64) < 0.05 * (big.faces.len() + small.faces.len()) as f64);
        let both = merge(&big, &small);
        let cleaned = remove_small_components(&both, 0.05);
        assert_eq!(cleaned.faces.len(), big.faces.len());
        assert_eq!(cleaned.vertices.len(), big.vertices.len());

        assert_eq!(remove_small_components(&big, 0.05), big);

        let twin = sphere_mesh(30, 0.8, Vec3::new(2.0, 0.0, 0.0));
        let pair = merge(&big, &twin);
        assert_eq!(remove_small_components(&pair, 0.4).faces.len(), pair.faces.len());
    }

    #[test]
    fn largest_component_always_kept() {
        let a = sphere_mesh(12, 0.5, Vec3::zeros());
        let kept = remove_small_components(&a, 2.0);
        assert_eq!(kept.faces.len(), a.faces.len());
    }

    #[test]
    fn colors_from_nearest_points() {
        let mesh = sphere_mesh(16, 0.5, Vec3::zeros());
        let mut cloud = OrientedPointCloud::default();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        for _ in 0..500 {
            let d = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)).normalize();
            cloud.positions.push(d * 0.5);
            cloud.normals.push(d);
            cloud.colors.push(Vec3::new(1.0, 0.0, 0.0));
        }
        let colored = colorize_vertices(&mesh, &cloud);
        for c in &colored.vertex_colors {
            assert!((c - Vec3::new(1.0, 0.0, 0.0)).norm() < 1e-12);
        }
        // Fewer points than k: all points are used.
        cloud.positions.truncate(3);
        cloud.normals.truncate(3);
        cloud.colors = vec![Vec3::zeros(), Vec3::repeat(1.0), Vec3::repeat(0.5)];
        let c = colorize_vertices(&mesh, &cloud);
        assert!(c.vertex_colors.iter().all(|c| c.x > 0.0 && c.x < 1.0));
    }
}
