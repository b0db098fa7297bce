//! Pixel-aligned Gaussians built from per-view 12-channel maps.

use rayon::prelude::*;

use crate::camera::{OrthoCamera, Vec3};
use crate::error::{Error, Result};

/// Opacity threshold below which pixels are excluded from meshing.
pub const MESH_OPACITY_THRESHOLD: f64 = 0.1;

pub const SCALE_MIN: f64 = 0.01;
pub const SCALE_MAX: f64 = 2.5;

/// Channel counts of the per-view decoder output, in storage order.
pub const RGB_CHANNELS: usize = 3;
pub const DEPTH_CHANNELS: usize = 1;
pub const OPACITY_CHANNELS: usize = 1;
pub const SCALE_CHANNELS: usize = 3;
pub const QUAT_CHANNELS: usize = 4;
pub const CHANNELS_PER_VIEW: usize =
    RGB_CHANNELS + DEPTH_CHANNELS + OPACITY_CHANNELS + SCALE_CHANNELS + QUAT_CHANNELS;

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Maps a raw scale to pixel-pitch multiples in (0.01, 2.5), near one pixel
/// at zero. Decreasing in the raw value.
pub fn scale_activation(raw: f64) -> f64 {
    let s = sigmoid(raw);
    SCALE_MIN * s + SCALE_MAX * (1.0 - s)
}

pub fn scale_activation3(raw: [f64; 3]) -> [f64; 3] {
    raw.map(scale_activation)
}

/// d scale_activation / d raw.
pub(crate) fn scale_activation_grad(raw: f64) -> f64 {
    let s = sigmoid(raw);
    (SCALE_MIN - SCALE_MAX) * s * (1.0 - s)
}

/// N views of RGB, depth and Gaussian feature maps, stored channel-planar
/// (`view, channel, row, column`).
#[derive(Debug, Clone, PartialEq)]
pub struct ViewSet {
    pub cameras: Vec<OrthoCamera>,
    pub height: usize,
    pub width: usize,
    /// `N x 3 x H x W`, in [0, 1].
    pub rgb: Vec<f64>,
    /// `N x H x W` ray depth; 0 marks background.
    pub depth: Vec<f64>,
    /// `N x H x W`, before the sigmoid.
    pub opacity_raw: Vec<f64>,
    /// `N x 3 x H x W`, before [`scale_activation`].
    pub scale_raw: Vec<f64>,
    /// `N x 4 x H x W`, `(w, x, y, z)` before normalization.
    pub quat_raw: Vec<f64>,
}

impl ViewSet {
    /// All-zero maps for the given cameras, with identity rotations.
    pub fn zeros(cameras: Vec<OrthoCamera>) -> Result<Self> {
        let (height, width) = shared_resolution(&cameras)?;
        let n = cameras.len();
        let hw = height * width;
        let mut quat_raw = vec![0.0; n * QUAT_CHANNELS * hw];
        for view in 0..n {
            let base = view * QUAT_CHANNELS * hw;
            quat_raw[base..base + hw].fill(1.0);
        }
        Ok(Self {
            cameras,
            height,
            width,
            rgb: vec![0.0; n * RGB_CHANNELS * hw],
            depth: vec![0.0; n * hw],
            opacity_raw: vec![0.0; n * hw],
            scale_raw: vec![0.0; n * SCALE_CHANNELS * hw],
            quat_raw,
        })
    }

    pub fn num_views(&self) -> usize {
        self.cameras.len()
    }

    pub fn pixels_per_view(&self) -> usize {
        self.height * self.width
    }

    /// Index of `(view, u, v)` in a single-channel plane stack.
    #[inline]
    pub fn pixel_index(&self, view: usize, u: usize, v: usize) -> usize {
        view * self.pixels_per_view() + v * self.width + u
    }

    /// Index of channel `c` of `(view, u, v)` in a `channels`-deep stack.
    #[inline]
    pub fn channel_index(&self, channels: usize, view: usize, c: usize, u: usize, v: usize) -> usize {
        (view * channels + c) * self.pixels_per_view() + v * self.width + u
    }

    pub fn validate(&self) -> Result<()> {
        let (h, w) = shared_resolution(&self.cameras)?;
        if (h, w) != (self.height, self.width) {
            return Err(Error::ShapeMismatch(format!(
                "cameras are {h}x{w} but maps are {}x{}",
                self.height, self.width
            )));
        }
        let plane = self.num_views() * self.pixels_per_view();
        let checks = [
            ("rgb", self.rgb.len(), RGB_CHANNELS),
            ("depth", self.depth.len(), DEPTH_CHANNELS),
            ("opacity", self.opacity_raw.len(), OPACITY_CHANNELS),
            ("scale", self.scale_raw.len(), SCALE_CHANNELS),
            ("rotation", self.quat_raw.len(), QUAT_CHANNELS),
        ];
        for (name, len, ch) in checks {
            if len != plane * ch {
                return Err(Error::ShapeMismatch(format!(
                    "{name} has {len} values, expected {}",
                    plane * ch
                )));
            }
        }
        Ok(())
    }

    pub fn same_shape(&self, other: &ViewSet) -> Result<()> {
        if self.num_views() != other.num_views()
            || self.height != other.height
            || self.width != other.width
        {
            return Err(Error::ShapeMismatch(format!(
                "{}x{}x{} vs {}x{}x{}",
                self.num_views(),
                self.height,
                self.width,
                other.num_views(),
                other.height,
                other.width
            )));
        }
        Ok(())
    }

    /// Activated opacity of one pixel.
    pub fn opacity(&self, view: usize, u: usize, v: usize) -> f64 {
        sigmoid(self.opacity_raw[self.pixel_index(view, u, v)])
    }

    pub fn rgb_at(&self, view: usize, u: usize, v: usize) -> Vec3 {
        Vec3::new(
            self.rgb[self.channel_index(3, view, 0, u, v)],
            self.rgb[self.channel_index(3, view, 1, u, v)],
            self.rgb[self.channel_index(3, view, 2, u, v)],
        )
    }

    pub fn depth_at(&self, view: usize, u: usize, v: usize) -> f64 {
        self.depth[self.pixel_index(view, u, v)]
    }

    /// Copy of one view's depth plane.
    pub fn depth_plane(&self, view: usize) -> &[f64] {
        let hw = self.pixels_per_view();
        &self.depth[view * hw..(view + 1) * hw]
    }

    /// A view set restricted to the listed views, in the given order.
    pub fn select(&self, views: &[usize]) -> ViewSet {
        let hw = self.pixels_per_view();
        let take = |data: &[f64], ch: usize| -> Vec<f64> {
            views
                .iter()
                .flat_map(|&i| data[i * ch * hw..(i + 1) * ch * hw].iter().copied())
                .collect()
        };
        ViewSet {
            cameras: views.iter().map(|&i| self.cameras[i]).collect(),
            height: self.height,
            width: self.width,
            rgb: take(&self.rgb, RGB_CHANNELS),
            depth: take(&self.depth, DEPTH_CHANNELS),
            opacity_raw: take(&self.opacity_raw, OPACITY_CHANNELS),
            scale_raw: take(&self.scale_raw, SCALE_CHANNELS),
            quat_raw: take(&self.quat_raw, QUAT_CHANNELS),
        }
    }
}

fn shared_resolution(cameras: &[OrthoCamera]) -> Result<(usize, usize)> {
    let first = cameras
        .first()
        .ok_or_else(|| Error::Empty("view set has no cameras".into()))?;
    let res = (first.height, first.width);
    if cameras.iter().any(|c| (c.height, c.width) != res) {
        return Err(Error::ShapeMismatch(
            "all views must share one resolution".into(),
        ));
    }
    Ok(res)
}

/// A 3D Gaussian primitive. `rotation` is a unit quaternion `(w, x, y, z)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gaussian3D {
    pub center: Vec3,
    pub color: Vec3,
    pub opacity: f64,
    pub scale: Vec3,
    pub rotation: [f64; 4],
}

/// Pixel a Gaussian was lifted from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelSource {
    pub view: usize,
    pub u: usize,
    pub v: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GaussianCloud {
    pub gaussians: Vec<Gaussian3D>,
    /// Parallel to `gaussians`; empty for clouds loaded from disk.
    pub source: Vec<PixelSource>,
}

impl GaussianCloud {
    pub fn len(&self) -> usize {
        self.gaussians.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaussians.is_empty()
    }
}

/// Normalizes a raw quaternion; a zero quaternion becomes the identity.
pub fn normalize_quat(q: [f64; 4]) -> [f64; 4] {
    let n = q.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n == 0.0 || !n.is_finite() {
        return [1.0, 0.0, 0.0, 0.0];
    }
    q.map(|x| x / n)
}

/// One Gaussian per pixel with positive depth and activated opacity at or
/// above `opacity_threshold`, ordered view-major then row-major.
pub fn build_pixel_gaussians(views: &ViewSet, opacity_threshold: f64) -> Result<GaussianCloud> {
    views.validate()?;
    if !(0.0..1.0).contains(&opacity_threshold) {
        return Err(Error::invalid(format!(
            "opacity threshold {opacity_threshold} outside [0, 1)"
        )));
    }
    let per_view: Vec<Vec<(Gaussian3D, PixelSource)>> = (0..views.num_views())
        .into_par_iter()
        .map(|view| {
            let cam = &views.cameras[view];
            let pitch = cam.pixel_pitch();
            let mut out = Vec::new();
            for v in 0..views.height {
                for u in 0..views.width {
                    let t = views.depth_at(view, u, v);
                    if !(t > 0.0) {
                        continue;
                    }
                    let opacity = views.opacity(view, u, v);
                    if opacity < opacity_threshold {
                        continue;
                    }
                    let scale = Vec3::from_fn(|c, _| {
                        scale_activation(views.scale_raw[views.channel_index(3, view, c, u, v)])
                            * pitch
                    });
                    let q = std::array::from_fn(|c| {
                        views.quat_raw[views.channel_index(4, view, c, u, v)]
                    });
                    let g = Gaussian3D {
                        center: cam.unproject_continuous(u as f64, v as f64, t),
                        color: views.rgb_at(view, u, v),
                        opacity,
                        scale,
                        rotation: normalize_quat(q),
                    };
                    out.push((g, PixelSource { view, u, v }));
                }
            }
            out
        })
        .collect();
    let (gaussians, source): (Vec<_>, Vec<_>) = per_view.into_iter().flatten().unzip();
    if gaussians.is_empty() {
        return Err(Error::EmptyCloud);
    }
    Ok(GaussianCloud { gaussians, source })
}

/// Per-view pixel masks for meshing: activated opacity >= 0.1 and depth > 0.
pub fn mask_for_meshing(views: &ViewSet) -> Vec<Vec<bool>> {
    let hw = views.pixels_per_view();
    (0..views.num_views())
        .map(|view| {
            (0..hw)
                .map(|i| {
                    let idx = view * hw + i;
                    views.depth[idx] > 0.0 && sigmoid(views.opacity_raw[idx]) >= MESH_OPACITY_THRESHOLD
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::make_six_view_rig;
    use proptest::prelude::*;

    fn logit(p: f64) -> f64 {
        (p / (1.0 - p)).ln()
    }

    #[test]
    fn scale_activation_limits() {
        assert!((scale_activation(0.0) - 1.255).abs() < 1e-15);
        assert!((scale_activation(40.0) - 0.01).abs() < 1e-9);
        assert!((scale_activation(-40.0) - 2.5).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn scale_activation_bounded_and_decreasing(a in -30.0f64..30.0, b in -30.0f64..30.0) {
            let (sa, sb) = (scale_activation(a), scale_activation(b));
            prop_assert!(sa > SCALE_MIN && sa < SCALE_MAX);
            if a < b - 1e-9 {
                prop_assert!(sa > sb);
            }
        }

        #[test]
        fn scale_activation_closed_range(a in -1e6f64..1e6) {
            let s = scale_activation(a);
            prop_assert!((SCALE_MIN..=SCALE_MAX).contains(&s));
        }
    }

    fn single_view(res: usize) -> ViewSet {
        let cams = make_six_view_rig(res, 1.0, 2.0).unwrap();
        ViewSet::zeros(vec![cams[0]]).unwrap()
    }

    #[test]
    fn all_background_is_an_error() {
        let vs = ViewSet::zeros(make_six_view_rig(8, 1.0, 2.0).unwrap()).unwrap();
        assert!(matches!(build_pixel_gaussians(&vs, 0.0), Err(Error::EmptyCloud)));
    }

    #[test]
    fn mask_threshold_keeps_equal() {
        let mut vs = single_view(4);
        vs.depth.fill(1.0);
        vs.opacity_raw[0] = logit(0.099);
        vs.opacity_raw[1] = logit(0.1);
        vs.opacity_raw[2] = 40.0;
        vs.opacity_raw[3] = -40.0;
        vs.depth[4] = 0.0;
        vs.opacity_raw[4] = 40.0;
        let mask = &mask_for_meshing(&vs)[0];
        assert!(!mask[0]);
        // logit(0.1) round-trips to exactly 0.1 or one ulp away; keep-on-equal.
        assert_eq!(mask[1], sigmoid(logit(0.1)) >= 0.1);
        assert!(mask[2]);
        assert!(!mask[3]);
        assert!(!mask[4]);
    }

    #[test]
    fn build_counts_unmasked_pixels() {
        let mut vs = single_view(4);
        vs.depth.fill(1.5);
        vs.opacity_raw.fill(40.0);
        vs.opacity_raw[5] = -40.0;
        vs.depth[7] = 0.0;
        let cloud = build_pixel_gaussians(&vs, 0.5).unwrap();
        assert_eq!(cloud.len(), 14);
        assert_eq!(cloud.source[0], PixelSource { view: 0, u: 0, v: 0 });
        assert_eq!(cloud.source[5], PixelSource { view: 0, u: 2, v: 1 });
        let pitch = vs.cameras[0].pixel_pitch();
        for g in &cloud.gaussians {
            assert!((g.scale.x - 1.255 * pitch).abs() < 1e-15);
            assert_eq!(g.rotation, [1.0, 0.0, 0.0, 0.0]);
            assert!((g.center.z - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_quaternion_becomes_identity() {
        assert_eq!(normalize_quat([0.0; 4]), [1.0, 0.0, 0.0, 0.0]);
        let q = normalize_quat([1.0, 2.0, -2.0, 4.0]);
        assert!((q.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_threshold() {
        let mut vs = single_view(4);
        vs.depth.fill(1.0);
        assert!(build_pixel_gaussians(&vs, 1.0).is_err());
        assert!(build_pixel_gaussians(&vs, -0.1).is_err());
    }
}
