use rayon::prelude::*;

use super::OrientedPointCloud;
use crate::camera::{OrthoCamera, Vec3};
use crate::error::{Error, Result};
use crate::gaussians::{mask_for_meshing, ViewSet};

/// Neighbours whose depth differs by more than this many pixel pitches are
/// treated as across an occlusion edge.
const DEPTH_JUMP_PITCHES: f64 = 8.0;

/// Per-pixel unit normals from depth gradients, facing the camera.
///
/// Uses central differences of the unprojected surface, one-sided ones at
/// mask boundaries and depth discontinuities. Pixels without a usable
/// neighbour on either image axis get `None`.
pub fn normals_from_depth(depth: &[f64], cam: &OrthoCamera, mask: &[bool]) -> Vec<Option<Vec3>> {
    let (w, h) = (cam.width, cam.height);
    assert_eq!(depth.len(), w * h);
    assert_eq!(mask.len(), w * h);
    let jump = DEPTH_JUMP_PITCHES * cam.pixel_pitch();
    let point = |u: usize, v: usize| cam.unproject_continuous(u as f64, v as f64, depth[v * w + u]);
    let valid = |u: usize, v: usize| mask[v * w + u] && depth[v * w + u] > 0.0;
    let dir = cam.direction();

    (0..h)
        .into_par_iter()
        .flat_map_iter(|v| {
            (0..w).map(move |u| {
                if !valid(u, v) {
                    return None;
                }
                let t0 = depth[v * w + u];
                let near = |uu: usize, vv: usize| valid(uu, vv) && (depth[vv * w + uu] - t0).abs() <= jump;
                let tangent = |prev: Option<(usize, usize)>, next: Option<(usize, usize)>| {
                    let p = prev.filter(|&(a, b)| near(a, b));
                    let n = next.filter(|&(a, b)| near(a, b));
                    match (p, n) {
                        (Some(p), Some(n)) => Some(point(n.0, n.1) - point(p.0, p.1)),
                        (None, Some(n)) => Some(point(n.0, n.1) - point(u, v)),
                        (Some(p), None) => Some(point(u, v) - point(p.0, p.1)),
                        (None, None) => None,
                    }
                };
                let tu = tangent(
                    u.checked_sub(1).map(|a| (a, v)),
                    (u + 1 < w).then_some((u + 1, v)),
                )?;
                let tv = tangent(
                    v.checked_sub(1).map(|b| (u, b)),
                    (v + 1 < h).then_some((u, v + 1)),
                )?;
                let n = tu.cross(&tv);
                let len = n.norm();
                if !(len > 0.0) {
                    return None;
                }
                let n = n / len;
                Some(if n.dot(&dir) > 0.0 { -n } else { n })
            })
        })
        .collect()
}

/// Back-projects the meshing-masked pixels of every view into one oriented,
/// colored cloud (view-major, row-major).
pub fn fuse_oriented_cloud(views: &ViewSet) -> Result<OrientedPointCloud> {
    views.validate()?;
    let masks = mask_for_meshing(views);
    let per_view: Vec<OrientedPointCloud> = (0..views.num_views())
        .into_par_iter()
        .map(|view| {
            let cam = &views.cameras[view];
            let normals = normals_from_depth(views.depth_plane(view), cam, &masks[view]);
            let mut out = OrientedPointCloud::default();
            for v in 0..views.height {
                for u in 0..views.width {
                    if let Some(n) = normals[v * views.width + u] {
                        out.positions
                            .push(cam.unproject_continuous(u as f64, v as f64, views.depth_at(view, u, v)));
                        out.normals.push(n);
                        out.colors.push(views.rgb_at(view, u, v));
                    }
                }
            }
            out
        })
        .collect();
    let mut cloud = OrientedPointCloud::default();
    for part in per_view {
        cloud.positions.extend(part.positions);
        cloud.normals.extend(part.normals);
        cloud.colors.extend(part.colors);
    }
    if cloud.is_empty() {
        return Err(Error::Empty("no pixels survived the meshing mask".into()));
    }
    Ok(cloud)
}
