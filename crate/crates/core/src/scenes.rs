//! Analytic ground truth: signed-distance scenes, exact orthographic RGBD
//! renders by sphere tracing, surface sampling, and the extended view rigs.

use nalgebra::Rotation3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::camera::{default_up, make_six_view_rig, Mat3, OrthoCamera, Vec3, ViewId};
use crate::error::{Error, Result};
use crate::gaussians::ViewSet;
use crate::recon::marching_cubes::{marching_cubes, ScalarGrid};
use crate::recon::TriMesh;

/// Sphere-tracing stops once the SDF drops below this.
const HIT_EPS: f64 = 1e-7;
const MAX_STEPS: usize = 10_000;
/// Raw opacity written for hits and misses.
pub const GT_OPACITY_LOGIT: f64 = 40.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    Sphere { radius: f64 },
    /// Axis-aligned box in local coordinates.
    Cuboid { half: Vec3 },
    /// Ring in the local xz-plane.
    Torus { major: f64, minor: f64 },
    /// Segment along local y.
    Capsule { half_length: f64, radius: f64 },
}

impl Shape {
    fn sdf(&self, p: &Vec3) -> f64 {
        match *self {
            Shape::Sphere { radius } => p.norm() - radius,
            Shape::Cuboid { half } => {
                let q = p.abs() - half;
                q.sup(&Vec3::zeros()).norm() + q.max().min(0.0)
            }
            Shape::Torus { major, minor } => {
                let ring = (p.x * p.x + p.z * p.z).sqrt() - major;
                (ring * ring + p.y * p.y).sqrt() - minor
            }
            Shape::Capsule { half_length, radius } => {
                let y = p.y.clamp(-half_length, half_length);
                (p - Vec3::new(0.0, y, 0.0)).norm() - radius
            }
        }
    }

    /// Radius of a ball around the local origin containing the shape.
    fn bounding_radius(&self) -> f64 {
        match *self {
            Shape::Sphere { radius } => radius,
            Shape::Cuboid { half } => half.norm(),
            Shape::Torus { major, minor } => major + minor,
            Shape::Capsule { half_length, radius } => half_length + radius,
        }
    }

    fn scaled(&self, s: f64) -> Shape {
        match *self {
            Shape::Sphere { radius } => Shape::Sphere { radius: radius * s },
            Shape::Cuboid { half } => Shape::Cuboid { half: half * s },
            Shape::Torus { major, minor } => Shape::Torus {
                major: major * s,
                minor: minor * s,
            },
            Shape::Capsule { half_length, radius } => Shape::Capsule {
                half_length: half_length * s,
                radius: radius * s,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Primitive {
    pub shape: Shape,
    pub center: Vec3,
    /// World-to-local rotation.
    pub rotation: Mat3,
    /// Flat albedo in [0, 1].
    pub color: Vec3,
}

impl Primitive {
    pub fn new(shape: Shape, center: Vec3, color: Vec3) -> Self {
        Self {
            shape,
            center,
            rotation: Mat3::identity(),
            color,
        }
    }

    pub fn rotated(mut self, rotation: Mat3) -> Self {
        self.rotation = rotation;
        self
    }

    pub fn sdf(&self, p: &Vec3) -> f64 {
        self.shape.sdf(&(self.rotation * (p - self.center)))
    }
}

/// Union of primitives.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticScene {
    pub primitives: Vec<Primitive>,
}

/// Colors are multiples of 1/255 so 8-bit storage is lossless.
fn rgb8(r: u8, g: u8, b: u8) -> Vec3 {
    Vec3::new(r as f64, g as f64, b as f64) / 255.0
}

pub const NAMED_SCENES: [&str; 6] = ["sphere", "box", "torus", "capsule", "sphere-box", "torus-capsule"];

impl AnalyticScene {
    pub fn new(primitives: Vec<Primitive>) -> Result<Self> {
        if primitives.is_empty() {
            return Err(Error::invalid("scene needs at least one primitive"));
        }
        Ok(Self { primitives }.normalized())
    }

    /// Union SDF (Lipschitz 1).
    pub fn sdf(&self, p: &Vec3) -> f64 {
        self.primitives
            .iter()
            .map(|prim| prim.sdf(p))
            .fold(f64::INFINITY, f64::min)
    }

    /// Albedo of the primitive closest to `p`; ties go to the first.
    pub fn color_at(&self, p: &Vec3) -> Vec3 {
        let mut best = (f64::INFINITY, Vec3::zeros());
        for prim in &self.primitives {
            let d = prim.sdf(p);
            if d < best.0 {
                best = (d, prim.color);
            }
        }
        best.1
    }

    pub fn gradient(&self, p: &Vec3) -> Vec3 {
        let h = 1e-6;
        Vec3::from_fn(|a, _| {
            let mut e = Vec3::zeros();
            e[a] = h;
            (self.sdf(&(p + e)) - self.sdf(&(p - e))) / (2.0 * h)
        })
    }

    pub fn bounding_radius(&self) -> f64 {
        self.primitives
            .iter()
            .map(|p| p.center.norm() + p.shape.bounding_radius())
            .fold(0.0, f64::max)
    }

    /// Uniformly rescales the scene about the origin so it fits the unit ball.
    pub fn normalized(mut self) -> Self {
        let r = self.bounding_radius();
        if r > 1.0 {
            let s = 1.0 / r;
            for p in &mut self.primitives {
                p.shape = p.shape.scaled(s);
                p.center *= s;
            }
        }
        self
    }

    /// Centers the bounding box of the primitives' bounding spheres on the
    /// origin and scales the scene so its bounding radius is exactly 1.
    pub fn fit_unit_ball(mut self) -> Self {
        let (mut lo, mut hi) = (Vec3::repeat(f64::INFINITY), Vec3::repeat(f64::NEG_INFINITY));
        for p in &self.primitives {
            let r = p.shape.bounding_radius();
            lo = lo.inf(&(p.center - Vec3::repeat(r)));
            hi = hi.sup(&(p.center + Vec3::repeat(r)));
        }
        let mid = (lo + hi) / 2.0;
        for p in &mut self.primitives {
            p.center -= mid;
        }
        let s = 1.0 / self.bounding_radius();
        for p in &mut self.primitives {
            p.shape = p.shape.scaled(s);
            p.center *= s;
        }
        self
    }

    pub fn named(name: &str) -> Result<Self> {
        let red = rgb8(204, 51, 51);
        let green = rgb8(51, 170, 85);
        let blue = rgb8(51, 102, 204);
        let gold = rgb8(221, 170, 34);
        let tilt = Rotation3::from_euler_angles(0.5, 0.0, 0.3).into_inner();
        let prims = match name {
            "sphere" => vec![Primitive::new(Shape::Sphere { radius: 1.0 }, Vec3::zeros(), red)],
            "box" => vec![Primitive::new(
                Shape::Cuboid { half: Vec3::new(0.5, 0.4, 0.45) },
                Vec3::zeros(),
                blue,
            )
            .rotated(tilt)],
            "torus" => vec![Primitive::new(
                Shape::Torus { major: 0.65, minor: 0.25 },
                Vec3::zeros(),
                gold,
            )
            .rotated(tilt)],
            "capsule" => vec![Primitive::new(
                Shape::Capsule { half_length: 0.45, radius: 0.35 },
                Vec3::zeros(),
                green,
            )
            .rotated(tilt)],
            "sphere-box" => vec![
                Primitive::new(Shape::Sphere { radius: 0.45 }, Vec3::new(-0.3, 0.2, 0.0), red),
                Primitive::new(Shape::Cuboid { half: Vec3::new(0.35, 0.3, 0.3) }, Vec3::new(0.3, -0.2, 0.1), blue)
                    .rotated(tilt),
            ],
            "torus-capsule" => vec![
                Primitive::new(Shape::Torus { major: 0.5, minor: 0.18 }, Vec3::new(0.0, -0.2, 0.0), gold),
                Primitive::new(Shape::Capsule { half_length: 0.35, radius: 0.2 }, Vec3::new(0.0, 0.25, 0.0), green),
            ],
            other => {
                if let Some(seed) = other.strip_prefix("random:").and_then(|s| s.parse().ok()) {
                    return Ok(Self::random(seed));
                }
                return Err(Error::invalid(format!(
                    "unknown scene '{other}' (expected one of {NAMED_SCENES:?} or random:<seed>)"
                )));
            }
        };
        Self::new(prims)
    }

    /// Three to six random upright primitives with random positions, sizes,
    /// headings and colors, fitted to the unit ball.
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let count = rng.gen_range(3..=6);
        let mut prims = Vec::with_capacity(count);
        for _ in 0..count {
            let size = rng.gen_range(0.2..0.45);
            let shape = match rng.gen_range(0..4) {
                0 => Shape::Sphere { radius: size },
                1 => Shape::Cuboid {
                    half: Vec3::new(
                        size * rng.gen_range(0.5..1.0),
                        size * rng.gen_range(0.5..1.0),
                        size * rng.gen_range(0.5..1.0),
                    ),
                },
                2 => Shape::Torus {
                    major: size,
                    minor: size * rng.gen_range(0.25..0.45),
                },
                _ => Shape::Capsule {
                    half_length: size * rng.gen_range(0.5..1.2),
                    radius: size * rng.gen_range(0.4..0.7),
                },
            };
            let center = Vec3::new(
                rng.gen_range(-0.5..0.5),
                rng.gen_range(-0.5..0.5),
                rng.gen_range(-0.5..0.5),
            );
            // Upright like a canonically oriented asset: one of three axis
            // tilts, then a random turn about the vertical.
            let tilt = match rng.gen_range(0..3) {
                0 => Rotation3::identity(),
                1 => Rotation3::from_axis_angle(&Vec3::x_axis(), std::f64::consts::FRAC_PI_2),
                _ => Rotation3::from_axis_angle(&Vec3::z_axis(), std::f64::consts::FRAC_PI_2),
            };
            let yaw = Rotation3::from_axis_angle(&Vec3::y_axis(), rng.gen_range(0.0..std::f64::consts::TAU));
            let rotation = (tilt * yaw).into_inner();
            let color = rgb8(rng.gen_range(30..=230), rng.gen_range(30..=230), rng.gen_range(30..=230));
            prims.push(Primitive::new(shape, center, color).rotated(rotation));
        }
        Self { primitives: prims }.fit_unit_ball()
    }

    /// First surface hit along `ray` within the unit ball, as ray depth.
    pub fn trace(&self, origin: &Vec3, dir: &Vec3) -> Option<f64> {
        // Clip to the bounding ball.
        let bound = 1.0 + 1e-6;
        let b = origin.dot(dir);
        let c = origin.norm_squared() - bound * bound;
        let disc = b * b - c;
        if disc < 0.0 {
            return None;
        }
        let sq = disc.sqrt();
        let t_exit = -b + sq;
        let mut t = (-b - sq).max(0.0);
        for _ in 0..MAX_STEPS {
            if t > t_exit {
                return None;
            }
            let d = self.sdf(&(origin + dir * t));
            if d < HIT_EPS {
                return Some(t);
            }
            t += d;
        }
        None
    }

    /// Uniform-ish surface samples: rejection in a thin shell, then Newton
    /// projection onto the zero set. Every sample has |SDF| < 1e-9.
    pub fn sample_surface(&self, n: usize, seed: u64) -> Vec<Vec3> {
        const SHELL: f64 = 0.02;
        const BATCH: usize = 4096;
        let mut out = Vec::with_capacity(n);
        let mut batch_seed = seed;
        while out.len() < n {
            let mut rng = ChaCha8Rng::seed_from_u64(batch_seed);
            batch_seed = batch_seed.wrapping_add(0x9E37_79B9_7F4A_7C15);
            let candidates: Vec<Vec3> = (0..BATCH * 16)
                .map(|_| Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect();
            let projected: Vec<Option<Vec3>> = candidates
                .par_iter()
                .map(|p| {
                    if self.sdf(p).abs() >= SHELL {
                        return None;
                    }
                    self.project_to_surface(*p)
                })
                .collect();
            out.extend(projected.into_iter().flatten().take(n - out.len()));
        }
        out
    }

    fn project_to_surface(&self, mut p: Vec3) -> Option<Vec3> {
        for _ in 0..64 {
            let d = self.sdf(&p);
            if d.abs() < 1e-9 {
                return Some(p);
            }
            let g = self.gradient(&p);
            let g2 = g.norm_squared();
            if g2 < 1e-12 {
                return None;
            }
            p -= g * (d / g2);
        }
        None
    }

    /// Ground-truth mesh by marching cubes on the sampled SDF.
    pub fn mesh(&self, resolution: usize) -> TriMesh {
        let lo = -1.1;
        let h = 2.2 / (resolution - 1) as f64;
        let grid = ScalarGrid::from_fn([resolution; 3], Vec3::repeat(lo), h, |p| self.sdf(&p));
        let mut mesh = marching_cubes(&grid, 0.0);
        mesh.vertex_colors = mesh.vertices.iter().map(|v| self.color_at(v)).collect();
        mesh
    }
}

/// Exact renders of `scene`: ray depth (0 on miss), flat albedo, and
/// saturated opacity logits; scales at zero and identity rotations.
pub fn render_gt_views(scene: &AnalyticScene, cameras: &[OrthoCamera]) -> Result<ViewSet> {
    let mut views = ViewSet::zeros(cameras.to_vec())?;
    let (h, w) = (views.height, views.width);
    let hw = h * w;
    for (view, cam) in cameras.iter().enumerate() {
        let dir = cam.direction();
        let rows: Vec<Vec<Option<(f64, Vec3)>>> = (0..h)
            .into_par_iter()
            .map(|v| {
                (0..w)
                    .map(|u| {
                        let o = cam.plane_point(u as f64, v as f64);
                        scene.trace(&o, &dir).map(|t| (t, scene.color_at(&(o + dir * t))))
                    })
                    .collect()
            })
            .collect();
        for (v, row) in rows.into_iter().enumerate() {
            for (u, hit) in row.into_iter().enumerate() {
                let idx = view * hw + v * w + u;
                match hit {
                    Some((t, color)) => {
                        views.depth[idx] = t;
                        views.opacity_raw[idx] = GT_OPACITY_LOGIT;
                        for c in 0..3 {
                            views.rgb[(view * 3 + c) * hw + v * w + u] = color[c];
                        }
                    }
                    None => views.opacity_raw[idx] = -GT_OPACITY_LOGIT,
                }
            }
        }
    }
    Ok(views)
}

/// Corner view names in order; position signs are `(x, y, z)` of the camera
/// (right = +x, top = +y, front = +z).
pub const CORNER_VIEWS: [(&str, [f64; 3]); 8] = [
    ("right-top-front", [1.0, 1.0, 1.0]),
    ("right-top-back", [1.0, 1.0, -1.0]),
    ("right-bottom-front", [1.0, -1.0, 1.0]),
    ("right-bottom-back", [1.0, -1.0, -1.0]),
    ("left-top-front", [-1.0, 1.0, 1.0]),
    ("left-top-back", [-1.0, 1.0, -1.0]),
    ("left-bottom-front", [-1.0, -1.0, 1.0]),
    ("left-bottom-back", [-1.0, -1.0, -1.0]),
];

pub const VIEW_COUNTS: [usize; 4] = [4, 6, 8, 14];

/// Prefix of the ordering front, back, left, right, top, bottom, then the
/// eight corner views.
pub fn extended_view_rig(
    count: usize,
    resolution: usize,
    half_extent: f64,
    plane_distance: f64,
) -> Result<Vec<OrthoCamera>> {
    if !VIEW_COUNTS.contains(&count) {
        return Err(Error::invalid(format!("view count {count} not in {VIEW_COUNTS:?}")));
    }
    let mut cams = make_six_view_rig(resolution, half_extent, plane_distance)?;
    for (k, (_, pos)) in CORNER_VIEWS.iter().enumerate() {
        let dir = -Vec3::from(*pos).normalize();
        cams.push(OrthoCamera::looking(
            ViewId::Custom(6 + k as u32),
            dir,
            default_up(&dir),
            plane_distance,
            half_extent,
            resolution,
        )?);
    }
    cams.truncate(count);
    Ok(cams)
}

/// Human-readable name of a camera from [`extended_view_rig`].
pub fn view_name(cam: &OrthoCamera) -> String {
    match cam.view_id {
        ViewId::Custom(k) if (6..14).contains(&k) => CORNER_VIEWS[k as usize - 6].0.to_string(),
        id => id.name(),
    }
}

pub fn view_id_from_name(name: &str) -> Option<ViewId> {
    CORNER_VIEWS
        .iter()
        .position(|(n, _)| *n == name)
        .map(|k| ViewId::Custom(6 + k as u32))
        .or_else(|| ViewId::from_name(name))
}
