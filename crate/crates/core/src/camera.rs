//! Orthographic cameras and the canonical six-view rig.
//!
//! World frame is right-handed with +y up; scene content is normalized to the
//! unit sphere. A camera's rotation is world-to-camera with rows
//! `[right, up, back]`, where `back` is the negated viewing direction. The
//! image plane sits at `plane_distance` from the origin along `back`, pixel
//! centers are at half-integer offsets and the row index grows downward.
//!
//! Up conventions: the four side views use world +y as image up, Top uses
//! -z and Bottom uses +z. With these, every pair of rig views shares exactly
//! one image axis, which is what turns epipolar lines into rows and columns.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Identifies the role of a camera in a rig.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ViewId {
    Front,
    Back,
    Left,
    Right,
    Top,
    Bottom,
    Custom(u32),
}

impl ViewId {
    pub const RIG: [ViewId; 6] = [
        ViewId::Front,
        ViewId::Back,
        ViewId::Left,
        ViewId::Right,
        ViewId::Top,
        ViewId::Bottom,
    ];

    pub fn name(&self) -> String {
        match self {
            ViewId::Front => "front".into(),
            ViewId::Back => "back".into(),
            ViewId::Left => "left".into(),
            ViewId::Right => "right".into(),
            ViewId::Top => "top".into(),
            ViewId::Bottom => "bottom".into(),
            ViewId::Custom(k) => format!("custom{k}"),
        }
    }

    pub fn from_name(name: &str) -> Option<ViewId> {
        Some(match name {
            "front" => ViewId::Front,
            "back" => ViewId::Back,
            "left" => ViewId::Left,
            "right" => ViewId::Right,
            "top" => ViewId::Top,
            "bottom" => ViewId::Bottom,
            other => ViewId::Custom(other.strip_prefix("custom")?.parse().ok()?),
        })
    }

    /// Viewing direction and image-up vector of a canonical rig view.
    fn axes(&self) -> Option<(Vec3, Vec3)> {
        let (d, up) = match self {
            ViewId::Front => ([0.0, 0.0, -1.0], [0.0, 1.0, 0.0]),
            ViewId::Back => ([0.0, 0.0, 1.0], [0.0, 1.0, 0.0]),
            ViewId::Left => ([1.0, 0.0, 0.0], [0.0, 1.0, 0.0]),
            ViewId::Right => ([-1.0, 0.0, 0.0], [0.0, 1.0, 0.0]),
            ViewId::Top => ([0.0, -1.0, 0.0], [0.0, 0.0, -1.0]),
            ViewId::Bottom => ([0.0, 1.0, 0.0], [0.0, 0.0, 1.0]),
            ViewId::Custom(_) => return None,
        };
        Some((Vec3::from(d), Vec3::from(up)))
    }
}

/// A ray leaving the image plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub direction: Vec3,
}

impl Ray {
    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }
}

/// Continuous image coordinates plus ray depth of a projected point.
///
/// `u`/`v` are in pixel units with pixel `(i, j)` centered at `(i, j)`.
/// `t <= 0` flags a point on or behind the image plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub u: f64,
    pub v: f64,
    pub t: f64,
}

impl Projection {
    pub fn in_front(&self) -> bool {
        self.t > 0.0
    }

    /// Index of the pixel whose footprint contains this projection, if any.
    pub fn pixel(&self, width: usize, height: usize) -> Option<(usize, usize)> {
        let pu = (self.u + 0.5).floor();
        let pv = (self.v + 0.5).floor();
        if pu < 0.0 || pv < 0.0 || pu >= width as f64 || pv >= height as f64 {
            return None;
        }
        Some((pu as usize, pv as usize))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrthoCamera {
    pub view_id: ViewId,
    /// World-to-camera rotation, rows `[right, up, back]`.
    pub rotation: Mat3,
    pub plane_distance: f64,
    pub half_extent: f64,
    pub height: usize,
    pub width: usize,
}

/// Image-up vector for an arbitrary viewing direction: world +y made
/// orthogonal to the view, falling back to the Top/Bottom convention when
/// looking straight down or up.
pub fn default_up(direction: &Vec3) -> Vec3 {
    let y = Vec3::y();
    let along = y.dot(direction);
    if along.abs() > 1.0 - 1e-9 {
        if along < 0.0 {
            -Vec3::z()
        } else {
            Vec3::z()
        }
    } else {
        (y - direction * along).normalize()
    }
}

impl OrthoCamera {
    /// Builds a camera looking along `direction` with the given image up.
    pub fn looking(
        view_id: ViewId,
        direction: Vec3,
        up: Vec3,
        plane_distance: f64,
        half_extent: f64,
        resolution: usize,
    ) -> Result<Self> {
        if resolution < 2 {
            return Err(Error::invalid(format!("resolution {resolution} < 2")));
        }
        if !(half_extent > 0.0 && plane_distance > 0.0) {
            return Err(Error::invalid(
                "half_extent and plane_distance must be positive",
            ));
        }
        let norm = direction.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::invalid("viewing direction must be non-zero"));
        }
        let back = -direction / norm;
        let up = up - back * up.dot(&back);
        if up.norm() < 1e-12 {
            return Err(Error::invalid("up vector parallel to the viewing direction"));
        }
        let up = up.normalize();
        let right = up.cross(&back);
        let rotation = Mat3::from_rows(&[right.transpose(), up.transpose(), back.transpose()]);
        Ok(Self {
            view_id,
            rotation,
            plane_distance,
            half_extent,
            height: resolution,
            width: resolution,
        })
    }

    /// Camera from an explicit world-to-camera rotation, as read from a manifest.
    pub fn from_rotation(
        view_id: ViewId,
        rotation: Mat3,
        plane_distance: f64,
        half_extent: f64,
        height: usize,
        width: usize,
    ) -> Result<Self> {
        let ortho = (rotation * rotation.transpose() - Mat3::identity()).abs().max();
        if ortho > 1e-9 || (rotation.determinant() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("camera rotation is not a proper rotation"));
        }
        if height < 2 || width < 2 {
            return Err(Error::invalid("resolution must be at least 2x2"));
        }
        if !(half_extent > 0.0 && plane_distance > 0.0) {
            return Err(Error::invalid(
                "half_extent and plane_distance must be positive",
            ));
        }
        Ok(Self {
            view_id,
            rotation,
            plane_distance,
            half_extent,
            height,
            width,
        })
    }

    /// Canonical rig view (`view_id` must not be `Custom`).
    pub fn canonical(
        view_id: ViewId,
        resolution: usize,
        half_extent: f64,
        plane_distance: f64,
    ) -> Result<Self> {
        let (d, up) = view_id
            .axes()
            .ok_or_else(|| Error::invalid("custom views have no canonical axes"))?;
        Self::looking(view_id, d, up, plane_distance, half_extent, resolution)
    }

    pub fn right(&self) -> Vec3 {
        self.rotation.row(0).transpose()
    }

    pub fn up(&self) -> Vec3 {
        self.rotation.row(1).transpose()
    }

    /// Unit viewing direction, shared by every ray of the camera.
    pub fn direction(&self) -> Vec3 {
        -self.rotation.row(2).transpose()
    }

    /// Pixel pitch along the image width in world units.
    pub fn pixel_pitch(&self) -> f64 {
        2.0 * self.half_extent / self.width as f64
    }

    fn pitch_y(&self) -> f64 {
        2.0 * self.half_extent / self.height as f64
    }

    /// World point on the image plane at continuous pixel coordinates.
    pub fn plane_point(&self, u: f64, v: f64) -> Vec3 {
        let x = -self.half_extent + (u + 0.5) * self.pixel_pitch();
        let y = self.half_extent - (v + 0.5) * self.pitch_y();
        self.right() * x + self.up() * y - self.direction() * self.plane_distance
    }

    pub fn pixel_ray(&self, u: usize, v: usize) -> Result<Ray> {
        self.check_pixel(u, v)?;
        Ok(self.ray_at(u as f64, v as f64))
    }

    pub(crate) fn ray_at(&self, u: f64, v: f64) -> Ray {
        Ray {
            origin: self.plane_point(u, v),
            direction: self.direction(),
        }
    }

    pub fn check_pixel(&self, u: usize, v: usize) -> Result<()> {
        if u >= self.width || v >= self.height {
            return Err(Error::PixelOutOfRange {
                u,
                v,
                width: self.width,
                height: self.height,
            });
        }
        Ok(())
    }

    /// `ray_o + t * ray_d` for the pixel center of `(u, v)`.
    pub fn unproject(&self, u: usize, v: usize, t: f64) -> Result<Vec3> {
        self.check_pixel(u, v)?;
        if !(t > 0.0) {
            return Err(Error::invalid(format!("depth {t} must be positive")));
        }
        Ok(self.ray_at(u as f64, v as f64).at(t))
    }

    /// Continuous-coordinate unprojection without range checks.
    pub fn unproject_continuous(&self, u: f64, v: f64, t: f64) -> Vec3 {
        self.ray_at(u, v).at(t)
    }

    pub fn project(&self, p: &Vec3) -> Projection {
        let c = self.rotation * p;
        Projection {
            u: (c.x + self.half_extent) / self.pixel_pitch() - 0.5,
            v: (self.half_extent - c.y) / self.pitch_y() - 0.5,
            t: self.plane_distance - c.z,
        }
    }
}

/// The canonical six-view rig in the order front, back, left, right, top, bottom.
pub fn make_six_view_rig(
    resolution: usize,
    half_extent: f64,
    plane_distance: f64,
) -> Result<Vec<OrthoCamera>> {
    if half_extent < 1.0 {
        return Err(Error::invalid(format!(
            "half_extent {half_extent} < 1 does not cover the unit sphere"
        )));
    }
    if plane_distance <= 1.0 {
        return Err(Error::invalid(format!(
            "plane_distance {plane_distance} <= 1 puts scene content behind the image plane"
        )));
    }
    ViewId::RIG
        .iter()
        .map(|&id| OrthoCamera::canonical(id, resolution, half_extent, plane_distance))
        .collect()
}

pub const DEFAULT_HALF_EXTENT: f64 = 1.0;
pub const DEFAULT_PLANE_DISTANCE: f64 = 2.0;

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rig() -> Vec<OrthoCamera> {
        make_six_view_rig(512, 1.0, 2.0).unwrap()
    }

    #[test]
    fn rig_directions() {
        let rig = rig();
        assert_eq!(rig.len(), 6);
        assert_eq!(rig[0].direction(), Vec3::new(0.0, 0.0, -1.0));
        assert_eq!(rig[1].direction(), Vec3::new(0.0, 0.0, 1.0));
        assert_eq!(rig[2].direction(), Vec3::new(1.0, 0.0, 0.0));
        assert_eq!(rig[3].direction(), Vec3::new(-1.0, 0.0, 0.0));
        assert_eq!(rig[4].direction(), Vec3::new(0.0, -1.0, 0.0));
        assert_eq!(rig[5].direction(), Vec3::new(0.0, 1.0, 0.0));
        assert_eq!(rig[0].pixel_pitch(), 0.00390625);
        for (i, a) in rig.iter().enumerate() {
            let r = a.rotation;
            assert!((r * r.transpose() - Mat3::identity()).abs().max() < 1e-9);
            assert!((r.determinant() - 1.0).abs() < 1e-9);
            for b in rig.iter().skip(i + 1) {
                let d = a.direction().dot(&b.direction());
                assert!(d == 0.0 || d == -1.0, "dot {d}");
            }
        }
    }

    #[test]
    fn up_conventions() {
        let rig = rig();
        for cam in &rig[..4] {
            assert_eq!(cam.up(), Vec3::y());
        }
        assert_eq!(rig[4].up(), -Vec3::z());
        assert_eq!(rig[5].up(), Vec3::z());
        for cam in &rig {
            assert_eq!(default_up(&cam.direction()), cam.up());
        }
    }

    #[test]
    fn rig_rejects_bad_geometry() {
        assert!(make_six_view_rig(512, 0.9, 2.0).is_err());
        assert!(make_six_view_rig(512, 1.0, 1.0).is_err());
        assert!(make_six_view_rig(1, 1.0, 2.0).is_err());
    }

    #[test]
    fn pixel_rays() {
        let front = rig()[0];
        let pitch = front.pixel_pitch();
        let r = front.pixel_ray(0, 0).unwrap();
        let expected = Vec3::new(-1.0 + pitch / 2.0, 1.0 - pitch / 2.0, 2.0);
        assert!((r.origin - expected).norm() < 1e-15);
        let c = front.pixel_ray(255, 255).unwrap();
        assert!(c.origin.x.abs() <= pitch && c.origin.y.abs() <= pitch);
        assert_eq!(c.direction, Vec3::new(0.0, 0.0, -1.0));
        assert!(front.pixel_ray(512, 0).is_err());
        assert!(front.pixel_ray(0, 512).is_err());
    }

    #[test]
    fn unproject_basics() {
        let front = rig()[0];
        let p = front.unproject(256, 256, 1.0).unwrap();
        assert!(p.x.abs() < 0.01 && p.y.abs() < 0.01 && (p.z - 1.0).abs() < 1e-12);
        let p = front.unproject(10, 20, 2.0).unwrap();
        assert_eq!(p.z, 0.0);
        assert!(front.unproject(0, 0, 0.0).is_err());
        assert!(front.unproject(0, 0, -1.0).is_err());
    }

    #[test]
    fn project_basics() {
        let front = rig()[0];
        let pr = front.project(&Vec3::zeros());
        assert_eq!(pr.t, 2.0);
        assert_eq!((pr.u, pr.v), (255.5, 255.5));
        let on_plane = front.project(&Vec3::new(0.3, 0.1, 2.0));
        assert_eq!(on_plane.t, 0.0);
        assert!(!on_plane.in_front());
    }

    #[test]
    fn round_trip_every_rig_camera() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for cam in make_six_view_rig(64, 1.0, 2.0).unwrap() {
            for _ in 0..1000 {
                let u = rng.gen_range(0..64);
                let v = rng.gen_range(0..64);
                let t = rng.gen_range(0.01..4.0);
                let p = cam.unproject(u, v, t).unwrap();
                let pr = cam.project(&p);
                assert!((pr.u - u as f64).abs() < 1e-9);
                assert!((pr.v - v as f64).abs() < 1e-9);
                assert!((pr.t - t).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn unit_sphere_projects_inside_every_view() {
        // Monte Carlo over points in the unit ball.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let rig = rig();
        let mut n = 0;
        while n < 10_000 {
            let p = Vec3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
            if p.norm() >= 1.0 {
                continue;
            }
            n += 1;
            for cam in &rig {
                let pr = cam.project(&p);
                assert!(pr.t > 0.0 && pr.t < 2.0 * cam.plane_distance);
                assert!(pr.pixel(cam.width, cam.height).is_some(), "{pr:?}");
            }
        }
    }
}
