//! Evaluation protocol: alignment, geometry metrics and image metrics.

mod icp;
mod image;
mod raster;
mod surface;
mod volume;

pub use icp::{cube_rotations, scale_adaptive_icp, IcpOptions, IcpResult, SimilarityTransform};
pub use image::{psnr, ssim, ssim_taps, PSNR_CAP, SSIM_K1, SSIM_K2, SSIM_SIGMA, SSIM_WINDOW};
pub use raster::{depth_error, rasterize, render_protocol_views, MeshRender, PROTOCOL_AZIMUTH_STEP, PROTOCOL_ELEVATIONS};
pub use surface::{chamfer_distance, chamfer_points, sample_mesh_surface, CHAMFER_SAMPLES, CHAMFER_SEED};
pub use volume::{box_mesh, volume_iou, voxel_volume, voxelize, VoxelFrame, IOU_GRID};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::Result;
use crate::recon::TriMesh;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub samples: usize,
    pub iou_grid: usize,
    /// Resolution of the 36 protocol renders.
    pub resolution: usize,
    pub object_radius: f64,
    /// Align the prediction to the ground truth before measuring.
    pub align: bool,
    pub icp: IcpOptions,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            samples: CHAMFER_SAMPLES,
            iou_grid: IOU_GRID,
            resolution: 512,
            object_radius: 1.0,
            align: true,
            icp: IcpOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricReport {
    pub chamfer: f64,
    pub volume_iou: f64,
    pub depth_error: f64,
    pub psnr: f64,
    pub ssim: f64,
    pub scale: [f64; 3],
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
}

impl MetricReport {
    pub fn transform(&self) -> SimilarityTransform {
        SimilarityTransform {
            scale: self.scale.into(),
            rotation: crate::camera::Mat3::from_fn(|r, c| self.rotation[r][c]),
            translation: self.translation.into(),
        }
    }

    /// `key=value` lines in a fixed order.
    pub fn to_text(&self) -> String {
        let t = &self.translation;
        let s = &self.scale;
        let r = &self.rotation;
        format!(
            "chamfer={:.9}\nvolume_iou={:.9}\ndepth_error={:.9}\npsnr={:.6}\nssim={:.9}\nscale={:.9} {:.9} {:.9}\nrotation={:.9} {:.9} {:.9} {:.9} {:.9} {:.9} {:.9} {:.9} {:.9}\ntranslation={:.9} {:.9} {:.9}\n",
            self.chamfer,
            self.volume_iou,
            self.depth_error,
            self.psnr,
            self.ssim,
            s[0], s[1], s[2],
            r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1], r[2][2],
            t[0], t[1], t[2],
        )
    }
}

/// Applies `tf` to every vertex.
pub fn transform_mesh(mesh: &TriMesh, tf: &SimilarityTransform) -> TriMesh {
    TriMesh {
        vertices: tf.apply_all(&mesh.vertices),
        ..mesh.clone()
    }
}

/// Full protocol: optional alignment of `pred` to `gt` on surface samples,
/// then Chamfer, volume IoU, depth error and the mean PSNR / SSIM of vertex
/// color renders over the 36 protocol views.
pub fn evaluate_meshes(pred: &TriMesh, gt: &TriMesh, options: &EvalOptions) -> Result<MetricReport> {
    let transform = if options.align {
        let src = sample_mesh_surface(pred, options.samples, CHAMFER_SEED)?;
        let dst = sample_mesh_surface(gt, options.samples, CHAMFER_SEED)?;
        scale_adaptive_icp(&src, &dst, &options.icp)?.transform
    } else {
        SimilarityTransform::identity()
    };
    let aligned = transform_mesh(pred, &transform);
    let chamfer = chamfer_distance(&aligned, gt, options.samples)?;
    let iou = volume_iou(&aligned, gt, options.iou_grid)?;
    let cams = render_protocol_views(options.object_radius, options.resolution)?;
    let depth = depth_error(&aligned, gt, &cams)?;
    let per_view: Vec<Result<(f64, f64)>> = cams
        .par_iter()
        .map(|cam| {
            let (a, b) = (rasterize(&aligned, cam), rasterize(gt, cam));
            Ok((psnr(&a.color, &b.color)?, ssim(&a.color, &b.color, 3, a.height, a.width)?))
        })
        .collect();
    let (mut p, mut s) = (0.0, 0.0);
    for r in per_view {
        let (a, b) = r?;
        p += a;
        s += b;
    }
    let n = cams.len() as f64;
    let r = transform.rotation;
    Ok(MetricReport {
        chamfer,
        volume_iou: iou,
        depth_error: depth,
        psnr: p / n,
        ssim: s / n,
        scale: transform.scale.into(),
        rotation: std::array::from_fn(|i| std::array::from_fn(|j| r[(i, j)])),
        translation: transform.translation.into(),
    })
}
