use rayon::prelude::*;

use crate::camera::Vec3;
use crate::error::{Error, Result};
use crate::recon::TriMesh;

pub const IOU_GRID: usize = 64;

/// Axis-aligned box sampled at `dims` voxel centres per axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoxelFrame {
    pub min: Vec3,
    pub max: Vec3,
    pub dims: usize,
}

impl VoxelFrame {
    pub fn spacing(&self) -> Vec3 {
        (self.max - self.min) / self.dims as f64
    }

    pub fn center(&self, i: usize, j: usize, k: usize) -> Vec3 {
        let h = self.spacing();
        self.min + Vec3::new((i as f64 + 0.5) * h.x, (j as f64 + 0.5) * h.y, (k as f64 + 0.5) * h.z)
    }

    pub fn voxel_volume(&self) -> f64 {
        let h = self.spacing();
        h.x * h.y * h.z
    }

    fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.dims + j) * self.dims + i
    }

    /// Bounding box of both meshes.
    pub fn union_of(a: &TriMesh, b: &TriMesh, dims: usize) -> Result<Self> {
        let (amin, amax) = a.bounds().ok_or_else(|| Error::Empty("mesh has no vertices".into()))?;
        let (bmin, bmax) = b.bounds().ok_or_else(|| Error::Empty("mesh has no vertices".into()))?;
        let min = amin.inf(&bmin);
        let mut max = amax.sup(&bmax);
        for c in 0..3 {
            if max[c] <= min[c] {
                max[c] = min[c] + 1e-9;
            }
        }
        Ok(Self { min, max, dims })
    }
}

/// `p` inside the counter-clockwise triangle `t`, with shared edges claimed
/// by exactly one side.
fn covers(t: &[[f64; 2]; 3], p: [f64; 2]) -> bool {
    (0..3).all(|i| {
        let (a, b) = (t[i], t[(i + 1) % 3]);
        let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
        let e = dx * (p[1] - a[1]) - dy * (p[0] - a[0]);
        e > 0.0 || (e == 0.0 && (dy < 0.0 || (dy == 0.0 && dx > 0.0)))
    })
}

/// Occupancy of a single axis by ray parity: for every grid line along
/// `axis`, the sorted crossing coordinates of the mesh.
fn parity_axis(mesh: &TriMesh, frame: &VoxelFrame, axis: usize) -> Vec<bool> {
    let (b, c) = ((axis + 1) % 3, (axis + 2) % 3);
    let g = frame.dims;
    let h = frame.spacing();
    let line_coord = |dim: usize, i: usize| frame.min[dim] + (i as f64 + 0.5) * h[dim];
    let mut hits: Vec<Vec<f64>> = vec![Vec::new(); g * g];
    for f in 0..mesh.faces.len() {
        let corners = mesh.corners(f);
        let mut t = corners.map(|p| [p[b], p[c]]);
        let mut z = corners.map(|p| p[axis]);
        let area = (t[1][0] - t[0][0]) * (t[2][1] - t[0][1]) - (t[1][1] - t[0][1]) * (t[2][0] - t[0][0]);
        if area == 0.0 {
            continue;
        }
        if area < 0.0 {
            t.swap(1, 2);
            z.swap(1, 2);
        }
        let lo = |dim: usize, v: f64| (((v - frame.min[dim]) / h[dim] - 0.5).ceil().max(0.0)) as usize;
        let hi = |dim: usize, v: f64| (((v - frame.min[dim]) / h[dim] - 0.5).floor()).min(g as f64 - 1.0);
        let (bmin, bmax) = (t.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min), t.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max));
        let (cmin, cmax) = (t.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min), t.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max));
        let (jb1, kc1) = (hi(b, bmax), hi(c, cmax));
        if jb1 < 0.0 || kc1 < 0.0 {
            continue;
        }
        let area = area.abs();
        for k in lo(c, cmin)..=kc1 as usize {
            for j in lo(b, bmin)..=jb1 as usize {
                let p = [line_coord(b, j), line_coord(c, k)];
                if !covers(&t, p) {
                    continue;
                }
                let w: [f64; 3] = std::array::from_fn(|i| {
                    let (q0, q1) = (t[(i + 1) % 3], t[(i + 2) % 3]);
                    ((q1[0] - q0[0]) * (p[1] - q0[1]) - (q1[1] - q0[1]) * (p[0] - q0[0])) / area
                });
                hits[k * g + j].push(w[0] * z[0] + w[1] * z[1] + w[2] * z[2]);
            }
        }
    }
    let columns: Vec<Vec<bool>> = hits
        .into_par_iter()
        .map(|mut line| {
            line.sort_by(f64::total_cmp);
            (0..g)
                .map(|i| {
                    let x = line_coord(axis, i);
                    let beyond = line.len() - line.partition_point(|&z| z <= x);
                    beyond % 2 == 1
                })
                .collect()
        })
        .collect();
    let mut occ = vec![false; g * g * g];
    for k in 0..g {
        for j in 0..g {
            for (i, &inside) in columns[k * g + j].iter().enumerate() {
                let mut idx = [0usize; 3];
                idx[axis] = i;
                idx[b] = j;
                idx[c] = k;
                occ[frame.index(idx[0], idx[1], idx[2])] = inside;
            }
        }
    }
    occ
}

/// Solid occupancy of voxel centres: ray parity along each axis, combined
/// by majority vote.
pub fn voxelize(mesh: &TriMesh, frame: &VoxelFrame) -> Vec<bool> {
    let axes: Vec<Vec<bool>> = (0..3).into_par_iter().map(|a| parity_axis(mesh, frame, a)).collect();
    (0..axes[0].len()).map(|i| axes.iter().filter(|o| o[i]).count() >= 2).collect()
}

/// Enclosed volume estimated by voxel counting.
pub fn voxel_volume(mesh: &TriMesh, dims: usize) -> Result<f64> {
    let frame = VoxelFrame::union_of(mesh, mesh, dims)?;
    let occ = voxelize(mesh, &frame);
    Ok(occ.iter().filter(|&&o| o).count() as f64 * frame.voxel_volume())
}

/// Intersection over union of the voxelized solids on a `dims`^3 grid over
/// the union bounding box.
pub fn volume_iou(a: &TriMesh, b: &TriMesh, dims: usize) -> Result<f64> {
    if dims == 0 {
        return Err(Error::invalid("grid resolution must be positive"));
    }
    let frame = VoxelFrame::union_of(a, b, dims)?;
    let (oa, ob) = rayon::join(|| voxelize(a, &frame), || voxelize(b, &frame));
    let inter = oa.iter().zip(&ob).filter(|(x, y)| **x && **y).count();
    let union = oa.iter().zip(&ob).filter(|(x, y)| **x || **y).count();
    if union == 0 {
        log::warn!("volume IoU: both meshes voxelize to empty solids; reporting 0");
        return Ok(0.0);
    }
    Ok(inter as f64 / union as f64)
}

/// Axis-aligned box mesh with outward-facing triangles.
pub fn box_mesh(min: Vec3, max: Vec3) -> TriMesh {
    let v: Vec<Vec3> = (0..8)
        .map(|i| Vec3::new(if i & 1 == 0 { min.x } else { max.x }, if i & 2 == 0 { min.y } else { max.y }, if i & 4 == 0 { min.z } else { max.z }))
        .collect();
    let quads = [[0, 2, 3, 1], [4, 5, 7, 6], [0, 1, 5, 4], [2, 6, 7, 3], [0, 4, 6, 2], [1, 3, 7, 5]];
    let faces = quads.iter().flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]]).collect();
    TriMesh {
        vertices: v,
        faces,
        vertex_colors: vec![Vec3::new(1.0, 1.0, 1.0); 8],
    }
}
