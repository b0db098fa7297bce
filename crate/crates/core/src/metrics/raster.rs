use rayon::prelude::*;

use crate::camera::{OrthoCamera, Vec3, ViewId};
use crate::error::{Error, Result};
use crate::recon::TriMesh;

/// Z-buffered render of a triangle mesh. `depth` is 0 where nothing was hit;
/// `color` is planar RGB with vertex colors interpolated, black background.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshRender {
    pub height: usize,
    pub width: usize,
    pub depth: Vec<f64>,
    pub color: Vec<f64>,
}

impl MeshRender {
    pub fn hit(&self, i: usize) -> bool {
        self.depth[i] > 0.0
    }
}

/// Rasterizes `mesh` at the pixel centres of `cam`, keeping the nearest hit
/// in front of the image plane. Ties keep the lower face index.
pub fn rasterize(mesh: &TriMesh, cam: &OrthoCamera) -> MeshRender {
    let (w, h) = (cam.width, cam.height);
    let proj: Vec<[f64; 3]> = mesh
        .vertices
        .iter()
        .map(|p| {
            let q = cam.project(p);
            [q.u, q.v, q.t]
        })
        .collect();
    // Rows are independent; each one scans the faces overlapping it.
    let mut by_row: Vec<Vec<u32>> = vec![Vec::new(); h];
    for (f, face) in mesh.faces.iter().enumerate() {
        let vs = face.map(|i| proj[i as usize][1]);
        let lo = vs.iter().cloned().fold(f64::INFINITY, f64::min).ceil().max(0.0);
        let hi = vs.iter().cloned().fold(f64::NEG_INFINITY, f64::max).floor().min(h as f64 - 1.0);
        if hi < lo {
            continue;
        }
        for y in lo as usize..=hi as usize {
            by_row[y].push(f as u32);
        }
    }
    let rows: Vec<(Vec<f64>, Vec<[f64; 3]>)> = by_row
        .par_iter()
        .enumerate()
        .map(|(y, faces)| {
            let mut depth = vec![f64::INFINITY; w];
            let mut color = vec![[0.0; 3]; w];
            let py = y as f64;
            for &f in faces {
                let face = mesh.faces[f as usize];
                let p = face.map(|i| proj[i as usize]);
                let area = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[1][1] - p[0][1]) * (p[2][0] - p[0][0]);
                if area == 0.0 {
                    continue;
                }
                let xs = p.map(|q| q[0]);
                let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min).ceil().max(0.0);
                let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max).floor().min(w as f64 - 1.0);
                if hi < lo {
                    continue;
                }
                for x in lo as usize..=hi as usize {
                    let px = x as f64;
                    let bary: [f64; 3] = std::array::from_fn(|i| {
                        let (a, b) = (p[(i + 1) % 3], p[(i + 2) % 3]);
                        ((b[0] - a[0]) * (py - a[1]) - (b[1] - a[1]) * (px - a[0])) / area
                    });
                    if bary.iter().any(|&l| l < 0.0) {
                        continue;
                    }
                    let t = bary[0] * p[0][2] + bary[1] * p[1][2] + bary[2] * p[2][2];
                    if t > 0.0 && t < depth[x] {
                        depth[x] = t;
                        let c = face.iter().zip(&bary).fold(Vec3::zeros(), |acc, (&i, &l)| {
                            acc + mesh.vertex_colors.get(i as usize).copied().unwrap_or_else(Vec3::zeros) * l
                        });
                        color[x] = [c.x, c.y, c.z];
                    }
                }
            }
            (depth, color)
        })
        .collect();
    let hw = w * h;
    let mut out = MeshRender {
        height: h,
        width: w,
        depth: vec![0.0; hw],
        color: vec![0.0; 3 * hw],
    };
    for (y, (depth, color)) in rows.into_iter().enumerate() {
        for x in 0..w {
            if depth[x].is_finite() {
                let i = y * w + x;
                out.depth[i] = depth[x];
                for c in 0..3 {
                    out.color[c * hw + i] = color[x][c];
                }
            }
        }
    }
    out
}

/// Mean absolute ray-depth difference over pixels hit by both meshes,
/// pooled over all cameras.
pub fn depth_error(mesh: &TriMesh, gt: &TriMesh, cams: &[OrthoCamera]) -> Result<f64> {
    let per: Vec<(f64, usize)> = cams
        .par_iter()
        .map(|cam| {
            let (a, b) = (rasterize(mesh, cam), rasterize(gt, cam));
            let mut sum = 0.0;
            let mut n = 0;
            for i in 0..a.depth.len() {
                if a.hit(i) && b.hit(i) {
                    sum += (a.depth[i] - b.depth[i]).abs();
                    n += 1;
                }
            }
            (sum, n)
        })
        .collect();
    let n: usize = per.iter().map(|p| p.1).sum();
    if n == 0 {
        return Err(Error::Degenerate("meshes share no co-visible pixels".into()));
    }
    Ok(per.iter().map(|p| p.0).sum::<f64>() / n as f64)
}

pub const PROTOCOL_ELEVATIONS: [f64; 3] = [-30.0, 0.0, 30.0];
pub const PROTOCOL_AZIMUTH_STEP: f64 = 30.0;

/// The 36 fixed evaluation cameras: three elevation rings times twelve
/// azimuths, framing a sphere of `object_radius`. Azimuth 0 at elevation 0
/// is the Front view.
pub fn render_protocol_views(object_radius: f64, resolution: usize) -> Result<Vec<OrthoCamera>> {
    if !(object_radius > 0.0) {
        return Err(Error::invalid("object radius must be positive"));
    }
    let mut cams = Vec::with_capacity(36);
    for (ring, e) in PROTOCOL_ELEVATIONS.iter().enumerate() {
        for k in 0..12 {
            let (e, a) = (e.to_radians(), (k as f64 * PROTOCOL_AZIMUTH_STEP).to_radians());
            let position = Vec3::new(e.cos() * a.sin(), e.sin(), e.cos() * a.cos());
            let dir = -position;
            cams.push(OrthoCamera::looking(
                ViewId::Custom((ring * 12 + k) as u32),
                dir,
                crate::camera::default_up(&dir),
                2.0 * object_radius,
                object_radius,
                resolution,
            )?);
        }
    }
    Ok(cams)
}
