use nalgebra::Rotation3;
use orthofuse::metrics::{
    box_mesh, chamfer_distance, chamfer_points, depth_error, psnr, rasterize, render_protocol_views,
    sample_mesh_surface, scale_adaptive_icp, ssim, ssim_taps, transform_mesh, volume_iou, IcpOptions,
    SimilarityTransform,
};
use orthofuse::{AnalyticScene, OrthoCamera, TriMesh, Vec3, ViewId};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn unit_sphere(radius: f64) -> TriMesh {
    TriMesh::icosphere(Vec3::zeros(), radius, 5)
}

#[test]
fn icosphere_is_closed_and_outward() {
    let m = TriMesh::icosphere(Vec3::zeros(), 1.0, 3);
    assert!(m.is_watertight());
    assert!((m.volume() - 4.0 / 3.0 * std::f64::consts::PI).abs() < 0.05);
}

#[test]
fn chamfer_identity_and_symmetry() {
    let a = unit_sphere(1.0);
    assert_eq!(chamfer_distance(&a, &a, 16_384).unwrap(), 0.0);
    let b = transform_mesh(
        &a,
        &SimilarityTransform {
            scale: Vec3::new(1.1, 0.9, 1.0),
            rotation: Rotation3::from_euler_angles(0.1, 0.2, 0.3).into_inner(),
            translation: Vec3::new(0.05, 0.0, 0.0),
        },
    );
    let ab = chamfer_distance(&a, &b, 4096).unwrap();
    assert!(ab > 0.0);
    assert_eq!(ab, chamfer_distance(&b, &a, 4096).unwrap());
}

#[test]
fn chamfer_of_concentric_spheres() {
    let cd = chamfer_distance(&unit_sphere(1.0), &unit_sphere(1.1), 16_384).unwrap();
    assert!((cd - 0.1).abs() < 0.002, "{cd}");
}

#[test]
fn chamfer_of_parallel_squares() {
    for gap in [0.01, 0.02, 0.05] {
        let a = box_mesh(Vec3::zeros(), Vec3::new(1.0, 1.0, 1e-9));
        // Single quads: keep only the z = max face of each box.
        let top = |m: &TriMesh, z: f64| TriMesh {
            vertices: vec![Vec3::new(0.0, 0.0, z), Vec3::new(1.0, 0.0, z), Vec3::new(1.0, 1.0, z), Vec3::new(0.0, 1.0, z)],
            faces: vec![[0, 1, 2], [0, 2, 3]],
            vertex_colors: m.vertex_colors[..4].to_vec(),
        };
        let cd = chamfer_distance(&top(&a, 0.0), &top(&a, gap), 16_384).unwrap();
        assert!((cd - gap).abs() < 0.05 * gap, "gap {gap}: {cd}");
    }
}

#[test]
fn iou_identity_disjoint_and_shifted_cube() {
    let a = box_mesh(Vec3::new(-0.5, -0.5, -0.5), Vec3::new(0.5, 0.5, 0.5));
    assert_eq!(volume_iou(&a, &a, 64).unwrap(), 1.0);
    let far = box_mesh(Vec3::new(2.0, 2.0, 2.0), Vec3::new(3.0, 3.0, 3.0));
    assert_eq!(volume_iou(&a, &far, 64).unwrap(), 0.0);
    let shifted = box_mesh(Vec3::new(0.0, -0.5, -0.5), Vec3::new(1.0, 0.5, 0.5));
    let iou = volume_iou(&a, &shifted, 64).unwrap();
    assert!((iou - 1.0 / 3.0).abs() < 0.02, "{iou}");
    let s = unit_sphere(1.0);
    assert_eq!(volume_iou(&s, &s, 64).unwrap(), 1.0);
}

#[test]
fn iou_of_concentric_spheres_matches_volume_ratio() {
    let iou = volume_iou(&unit_sphere(0.8), &unit_sphere(1.0), 64).unwrap();
    assert!((iou - 0.512).abs() < 0.02, "{iou}");
}

#[test]
fn depth_error_cases() {
    let cams = render_protocol_views(1.0, 64).unwrap();
    let s = unit_sphere(1.0);
    assert_eq!(depth_error(&s, &s, &cams).unwrap(), 0.0);

    let front = OrthoCamera::canonical(ViewId::Front, 65, 1.2, 2.0).unwrap();
    let (a, b) = (rasterize(&s, &front), rasterize(&unit_sphere(1.05), &front));
    let centre = 32 * 65 + 32;
    assert!(((a.depth[centre] - b.depth[centre]).abs() - 0.05).abs() < 1e-3);

    let left = TriMesh::icosphere(Vec3::new(-0.6, 0.0, 0.0), 0.2, 2);
    let right = TriMesh::icosphere(Vec3::new(0.6, 0.0, 0.0), 0.2, 2);
    assert!(depth_error(&left, &right, &[front]).is_err());
}

#[test]
fn protocol_views() {
    let cams = render_protocol_views(1.0, 32).unwrap();
    assert_eq!(cams.len(), 36);
    let front = OrthoCamera::canonical(ViewId::Front, 32, 1.0, 2.0).unwrap();
    let c = &cams[12];
    assert!((c.rotation - front.rotation).abs().max() < 1e-12);
    assert_eq!(c.plane_distance, front.plane_distance);
    assert_eq!(c.half_extent, front.half_extent);
    assert_eq!(cams, render_protocol_views(1.0, 32).unwrap());
    // Elevation rings.
    for (ring, e) in [-30.0f64, 0.0, 30.0].iter().enumerate() {
        for cam in &cams[ring * 12..(ring + 1) * 12] {
            assert!((-cam.direction().y - e.to_radians().sin()).abs() < 1e-12);
        }
    }
}

/// Windowed SSIM written out directly, one window at a time.
fn brute_ssim(a: &[f64], b: &[f64], channels: usize, h: usize, w: usize) -> f64 {
    let taps = ssim_taps();
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let mut total = 0.0;
    let mut n = 0;
    for c in 0..channels {
        for y in 0..=h - 11 {
            for x in 0..=w - 11 {
                let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for j in 0..11 {
                    for i in 0..11 {
                        let wt = taps[j] * taps[i];
                        let k = c * h * w + (y + j) * w + x + i;
                        mx += wt * a[k];
                        my += wt * b[k];
                        sxx += wt * a[k] * a[k];
                        syy += wt * b[k] * b[k];
                        sxy += wt * a[k] * b[k];
                    }
                }
                let (vx, vy, cov) = (sxx - mx * mx, syy - my * my, sxy - mx * my);
                total += (2.0 * mx * my + c1) * (2.0 * cov + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
                n += 1;
            }
        }
    }
    total / n as f64
}

#[test]
fn ssim_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..3 {
        let a: Vec<f64> = (0..3 * 32 * 32).map(|_| rng.gen_range(0.0..1.0)).collect();
        let b: Vec<f64> = a.iter().map(|x| (x + rng.gen_range(-0.2..0.2f64)).clamp(0.0, 1.0)).collect();
        let fast = ssim(&a, &b, 3, 32, 32).unwrap();
        assert!((fast - brute_ssim(&a, &b, 3, 32, 32)).abs() < 1e-9);
        assert!((-1.0..=1.0).contains(&fast));
        assert!((ssim(&a, &a, 3, 32, 32).unwrap() - 1.0).abs() < 1e-12);
    }
    assert_eq!(psnr(&[0.2; 10], &[0.2; 10]).unwrap(), 99.0);
}

fn random_transform(rng: &mut ChaCha8Rng) -> SimilarityTransform {
    let axis = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    let angle = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
    SimilarityTransform {
        scale: Vec3::from_fn(|_, _| rng.gen_range(0.7..1.3)),
        rotation: Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle).into_inner(),
        translation: Vec3::from_fn(|_, _| rng.gen_range(-0.3..0.3)),
    }
}

#[test]
fn icp_identity() {
    let pts = AnalyticScene::named("torus-capsule").unwrap().sample_surface(4000, 3);
    let r = scale_adaptive_icp(&pts, &pts, &IcpOptions::default()).unwrap();
    let t = r.transform;
    assert!((t.scale - Vec3::new(1.0, 1.0, 1.0)).abs().max() < 1e-6);
    assert!((t.rotation - nalgebra::Matrix3::identity()).abs().max() < 1e-6);
    assert!(t.translation.abs().max() < 1e-6);
}

#[test]
fn icp_recovers_synthetic_transforms() {
    let opts = IcpOptions::default();
    let mut worst: f64 = 0.0;
    for trial in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + trial);
        let scene = AnalyticScene::random(trial);
        let src = scene.sample_surface(3000, trial);
        let truth = random_transform(&mut rng);
        let dst = truth.apply_all(&src);
        let got = scale_adaptive_icp(&src, &dst, &opts).unwrap().transform;
        let err = (got.scale - truth.scale)
            .abs()
            .max()
            .max((got.rotation - truth.rotation).abs().max())
            .max((got.translation - truth.translation).abs().max());
        worst = worst.max(err);
        assert!(err < 1e-3, "trial {trial}: parameter error {err}");
        let before = chamfer_points(&src, &dst).unwrap();
        let after = chamfer_points(&got.apply_all(&src), &dst).unwrap();
        assert!(after <= before + 1e-9);
    }
    eprintln!("worst parameter error {worst:.3e}");
}

#[test]
fn icp_aligns_sampled_meshes() {
    let a = unit_sphere(1.0);
    let stretched = transform_mesh(
        &AnalyticScene::named("box").unwrap().mesh(64),
        &SimilarityTransform {
            scale: Vec3::new(1.2, 0.8, 1.0),
            rotation: nalgebra::Matrix3::identity(),
            translation: Vec3::new(0.1, 0.0, 0.0),
        },
    );
    let src = sample_mesh_surface(&stretched, 4096, 1).unwrap();
    let dst = sample_mesh_surface(&a, 4096, 2).unwrap();
    let r = scale_adaptive_icp(&src, &dst, &IcpOptions::default()).unwrap();
    let before = chamfer_points(&src, &dst).unwrap();
    let after = chamfer_points(&r.transform.apply_all(&src), &dst).unwrap();
    assert!(after <= before + 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn iou_and_chamfer_are_symmetric(
        ax in -0.5f64..0.5, ay in -0.5f64..0.5, bx in -0.5f64..0.5, s in 0.3f64..0.9,
    ) {
        let a = box_mesh(Vec3::new(ax, ay, 0.0), Vec3::new(ax + s, ay + s, s));
        let b = box_mesh(Vec3::new(bx, 0.0, 0.1), Vec3::new(bx + 0.5, 0.5, 0.6));
        let iab = volume_iou(&a, &b, 32).unwrap();
        prop_assert_eq!(iab, volume_iou(&b, &a, 32).unwrap());
        prop_assert!((0.0..=1.0).contains(&iab));
        prop_assert_eq!(chamfer_distance(&a, &b, 1024).unwrap(), chamfer_distance(&b, &a, 1024).unwrap());
    }
}
