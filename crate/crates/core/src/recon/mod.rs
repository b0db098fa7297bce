//! Meshing pipeline: depth normals, oriented point fusion, screened Poisson,
//! marching cubes, smoothing, coloring and floater removal.

mod cleanup;
pub mod marching_cubes;
mod normals;
pub mod poisson;

use std::collections::HashMap;

pub use cleanup::{colorize_vertices, laplacian_smooth, remove_small_components};
pub use marching_cubes::{marching_cubes, ScalarGrid};
pub use normals::{fuse_oriented_cloud, normals_from_depth};
pub use poisson::{poisson_reconstruct, PoissonOptions};

use crate::camera::Vec3;
use crate::error::Result;
use crate::gaussians::ViewSet;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct OrientedPointCloud {
    pub positions: Vec<Vec3>,
    pub normals: Vec<Vec3>,
    pub colors: Vec<Vec3>,
}

impl OrientedPointCloud {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[u32; 3]>,
    pub vertex_colors: Vec<Vec3>,
}

impl TriMesh {
    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    pub fn corners(&self, f: usize) -> [Vec3; 3] {
        self.faces[f].map(|i| self.vertices[i as usize])
    }

    /// Unit normal of face `f` (right-hand rule on its winding).
    pub fn face_normal(&self, f: usize) -> Vec3 {
        let [a, b, c] = self.corners(f);
        (b - a).cross(&(c - a)).normalize()
    }

    pub fn face_area(&self, f: usize) -> f64 {
        let [a, b, c] = self.corners(f);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    pub fn face_centroid(&self, f: usize) -> Vec3 {
        let [a, b, c] = self.corners(f);
        (a + b + c) / 3.0
    }

    pub fn area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    /// Signed enclosed volume (positive for outward winding).
    pub fn volume(&self) -> f64 {
        (0..self.faces.len())
            .map(|f| {
                let [a, b, c] = self.corners(f);
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum()
    }

    pub fn bounds(&self) -> Option<(Vec3, Vec3)> {
        let first = *self.vertices.first()?;
        Some(self.vertices.iter().fold((first, first), |(lo, hi), v| {
            (lo.inf(v), hi.sup(v))
        }))
    }

    /// Every undirected edge is shared by exactly two faces.
    pub fn is_watertight(&self) -> bool {
        if self.faces.is_empty() {
            return false;
        }
        let mut counts: HashMap<(u32, u32), u32> = HashMap::new();
        for f in &self.faces {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                *counts.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        counts.values().all(|&c| c == 2)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len() as u32;
        for (i, f) in self.faces.iter().enumerate() {
            if f.iter().any(|&v| v >= n) {
                return Err(crate::Error::invalid(format!("face {i} indexes past {n} vertices")));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(crate::Error::invalid(format!("face {i} repeats a vertex")));
            }
        }
        if !self.vertex_colors.is_empty() && self.vertex_colors.len() != self.vertices.len() {
            return Err(crate::Error::invalid("vertex colors do not match vertex count"));
        }
        Ok(())
    }

    /// Subdivided icosahedron with vertices on the sphere, outward faces,
    /// white vertex colors. `20 * 4^subdivisions` faces.
    pub fn icosphere(center: Vec3, radius: f64, subdivisions: usize) -> TriMesh {
        let p = (1.0 + 5f64.sqrt()) / 2.0;
        let mut verts: Vec<Vec3> = [
            (-1.0, p, 0.0), (1.0, p, 0.0), (-1.0, -p, 0.0), (1.0, -p, 0.0),
            (0.0, -1.0, p), (0.0, 1.0, p), (0.0, -1.0, -p), (0.0, 1.0, -p),
            (p, 0.0, -1.0), (p, 0.0, 1.0), (-p, 0.0, -1.0), (-p, 0.0, 1.0),
        ]
        .iter()
        .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
        .collect();
        let mut faces: Vec<[u32; 3]> = vec![
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ];
        for _ in 0..subdivisions {
            let mut mid: HashMap<(u32, u32), u32> = HashMap::new();
            let mut split = |a: u32, b: u32, verts: &mut Vec<Vec3>| {
                *mid.entry((a.min(b), a.max(b))).or_insert_with(|| {
                    verts.push((verts[a as usize] + verts[b as usize]).normalize());
                    verts.len() as u32 - 1
                })
            };
            let mut next = Vec::with_capacity(faces.len() * 4);
            for [a, b, c] in faces {
                let (ab, bc, ca) = (split(a, b, &mut verts), split(b, c, &mut verts), split(c, a, &mut verts));
                next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
            }
            faces = next;
        }
        let n = verts.len();
        TriMesh {
            vertices: verts.into_iter().map(|v| center + v * radius).collect(),
            faces,
            vertex_colors: vec![Vec3::new(1.0, 1.0, 1.0); n],
        }
    }

    /// Sorted, de-duplicated vertex neighbours from face connectivity.
    pub fn vertex_neighbors(&self) -> Vec<Vec<u32>> {
        let mut nbrs = vec![Vec::new(); self.vertices.len()];
        for f in &self.faces {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                nbrs[a as usize].push(b);
                nbrs[b as usize].push(a);
            }
        }
        for n in &mut nbrs {
            n.sort_unstable();
            n.dedup();
        }
        nbrs
    }
}

/// Settings for turning a view set into a colored mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshingOptions {
    pub poisson: PoissonOptions,
    pub smooth_iterations: usize,
    pub smooth_lambda: f64,
    pub min_component_fraction: f64,
}

impl Default for MeshingOptions {
    fn default() -> Self {
        Self {
            poisson: PoissonOptions::default(),
            smooth_iterations: 10,
            smooth_lambda: 0.5,
            min_component_fraction: 0.02,
        }
    }
}

/// Full meshing pipeline: fuse, reconstruct, drop floaters, smooth, color.
pub fn mesh_from_views(views: &ViewSet, options: &MeshingOptions) -> Result<TriMesh> {
    let cloud = fuse_oriented_cloud(views)?;
    mesh_from_cloud(&cloud, options)
}

pub fn mesh_from_cloud(cloud: &OrientedPointCloud, options: &MeshingOptions) -> Result<TriMesh> {
    let mesh = poisson_reconstruct(cloud, &options.poisson)?;
    let mesh = remove_small_components(&mesh, options.min_component_fraction);
    let mesh = laplacian_smooth(&mesh, options.smooth_iterations, options.smooth_lambda);
    Ok(colorize_vertices(&mesh, cloud))
}
