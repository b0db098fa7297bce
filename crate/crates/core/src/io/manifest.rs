use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::raster::{read_pfm, read_png_rgb, write_pfm, write_png_rgb};
use super::{read_bytes, write_bytes};
use crate::camera::{Mat3, OrthoCamera};
use crate::error::{Error, Result};
use crate::gaussians::ViewSet;
use crate::scenes::{view_id_from_name, view_name};

pub const MANIFEST_VERSION: &str = "orthofuse-manifest/1";

/// Feature planes per view: opacity logit, 3 scale logits, 4 quaternion
/// components, stacked vertically in one PFM.
const FEATURE_PLANES: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViewRecord {
    pub name: String,
    /// World-to-camera rotation, row-major, rows `[right, up, back]`.
    pub rotation: [f64; 9],
    pub plane_distance: f64,
    pub half_extent: f64,
    pub height: usize,
    pub width: usize,
    pub rgb: String,
    pub depth: String,
    pub features: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneManifest {
    pub version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene: Option<String>,
    #[serde(default)]
    pub provenance: String,
    pub views: Vec<ViewRecord>,
}

impl ViewRecord {
    pub fn camera(&self) -> Result<OrthoCamera> {
        let id = view_id_from_name(&self.name).ok_or_else(|| Error::invalid(format!("unknown view name '{}'", self.name)))?;
        let r = &self.rotation;
        OrthoCamera::from_rotation(
            id,
            Mat3::new(r[0], r[1], r[2], r[3], r[4], r[5], r[6], r[7], r[8]),
            self.plane_distance,
            self.half_extent,
            self.height,
            self.width,
        )
    }
}

/// Writes one PNG and two PFMs per view plus `manifest.json` into `dir`;
/// returns the manifest path.
pub fn write_view_set(dir: &Path, views: &ViewSet, scene: Option<&str>, provenance: &str) -> Result<PathBuf> {
    views.validate()?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (h, w) = (views.height, views.width);
    let hw = h * w;
    let mut records = Vec::with_capacity(views.num_views());
    for (k, cam) in views.cameras.iter().enumerate() {
        let name = view_name(cam);
        let rec = ViewRecord {
            name: name.clone(),
            rotation: std::array::from_fn(|i| cam.rotation[(i / 3, i % 3)]),
            plane_distance: cam.plane_distance,
            half_extent: cam.half_extent,
            height: h,
            width: w,
            rgb: format!("{name}_rgb.png"),
            depth: format!("{name}_depth.pfm"),
            features: format!("{name}_features.pfm"),
        };
        write_png_rgb(&dir.join(&rec.rgb), &views.rgb[3 * k * hw..3 * (k + 1) * hw], w, h)?;
        write_pfm(&dir.join(&rec.depth), &views.depth[k * hw..(k + 1) * hw], w, h)?;
        let mut feats = Vec::with_capacity(FEATURE_PLANES * hw);
        feats.extend_from_slice(&views.opacity_raw[k * hw..(k + 1) * hw]);
        feats.extend_from_slice(&views.scale_raw[3 * k * hw..3 * (k + 1) * hw]);
        feats.extend_from_slice(&views.quat_raw[4 * k * hw..4 * (k + 1) * hw]);
        write_pfm(&dir.join(&rec.features), &feats, w, FEATURE_PLANES * h)?;
        records.push(rec);
    }
    let manifest = SceneManifest {
        version: MANIFEST_VERSION.into(),
        scene: scene.map(str::to_string),
        provenance: provenance.into(),
        views: records,
    };
    let path = dir.join("manifest.json");
    let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::format(&path, e.to_string()))?;
    text.push('\n');
    write_bytes(&path, text.as_bytes())?;
    Ok(path)
}

/// Accepts either the manifest file or the directory holding `manifest.json`.
pub fn resolve_manifest(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join("manifest.json")
    } else {
        path.to_path_buf()
    }
}

pub fn read_manifest(path: &Path) -> Result<SceneManifest> {
    let path = resolve_manifest(path);
    let bytes = read_bytes(&path)?;
    let m: SceneManifest = serde_json::from_slice(&bytes).map_err(|e| Error::format(&path, e.to_string()))?;
    if m.version != MANIFEST_VERSION {
        return Err(Error::format(&path, format!("version: '{}' is not '{MANIFEST_VERSION}'", m.version)));
    }
    if m.views.is_empty() {
        return Err(Error::format(&path, "views: empty list"));
    }
    Ok(m)
}

/// Loads a manifest and every file it references into a [`ViewSet`].
pub fn read_view_set(path: &Path) -> Result<(SceneManifest, ViewSet)> {
    let manifest_path = resolve_manifest(path);
    let m = read_manifest(&manifest_path)?;
    let dir = manifest_path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let field = |k: usize, f: &str, msg: String| Error::format(&manifest_path, format!("views[{k}].{f}: {msg}"));
    let (h, w) = (m.views[0].height, m.views[0].width);
    let mut cams = Vec::with_capacity(m.views.len());
    for (k, rec) in m.views.iter().enumerate() {
        if (rec.height, rec.width) != (h, w) {
            return Err(field(k, "height", format!("{}x{} differs from the first view's {w}x{h}", rec.width, rec.height)));
        }
        cams.push(rec.camera().map_err(|e| field(k, "rotation", e.to_string()))?);
    }
    let mut views = ViewSet::zeros(cams).map_err(|e| Error::format(&manifest_path, e.to_string()))?;
    let hw = h * w;
    for (k, rec) in m.views.iter().enumerate() {
        let (rgb, rw, rh) = read_png_rgb(&dir.join(&rec.rgb))?;
        if (rw, rh) != (w, h) {
            return Err(field(k, "rgb", format!("{} is {rw}x{rh}, manifest says {w}x{h}", rec.rgb)));
        }
        views.rgb[3 * k * hw..3 * (k + 1) * hw].copy_from_slice(&rgb);
        let depth = read_pfm(&dir.join(&rec.depth))?;
        if (depth.width, depth.height) != (w, h) {
            return Err(field(k, "depth", format!("{} is {}x{}, manifest says {w}x{h}", rec.depth, depth.width, depth.height)));
        }
        views.depth[k * hw..(k + 1) * hw].copy_from_slice(&depth.data);
        let feats = read_pfm(&dir.join(&rec.features))?;
        if (feats.width, feats.height) != (w, FEATURE_PLANES * h) {
            return Err(field(
                k,
                "features",
                format!("{} is {}x{}, expected {w}x{} ({FEATURE_PLANES} stacked planes)", rec.features, feats.width, feats.height, FEATURE_PLANES * h),
            ));
        }
        views.opacity_raw[k * hw..(k + 1) * hw].copy_from_slice(&feats.data[..hw]);
        views.scale_raw[3 * k * hw..3 * (k + 1) * hw].copy_from_slice(&feats.data[hw..4 * hw]);
        views.quat_raw[4 * k * hw..4 * (k + 1) * hw].copy_from_slice(&feats.data[4 * hw..]);
    }
    views.validate().map_err(|e| Error::format(&manifest_path, e.to_string()))?;
    Ok((m, views))
}
