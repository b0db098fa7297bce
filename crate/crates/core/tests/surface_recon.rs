use orthofuse::metrics::voxel_volume;
use orthofuse::recon::{
    colorize_vertices, fuse_oriented_cloud, mesh_from_cloud, mesh_from_views, normals_from_depth, poisson_reconstruct,
    MeshingOptions, PoissonOptions,
};
use orthofuse::{make_six_view_rig, mask_for_meshing, render_gt_views, AnalyticScene, OrientedPointCloud, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn angle_deg(a: &Vec3, b: &Vec3) -> f64 {
    a.normalize().dot(&b.normalize()).clamp(-1.0, 1.0).acos().to_degrees()
}

#[test]
fn sphere_depth_normals_match_radial_direction() {
    let res = 128;
    let cams = make_six_view_rig(res, 1.0, 2.0).unwrap();
    let views = render_gt_views(&AnalyticScene::named("sphere").unwrap(), &cams).unwrap();
    let masks = mask_for_meshing(&views);
    for (k, cam) in cams.iter().enumerate() {
        let normals = normals_from_depth(views.depth_plane(k), cam, &masks[k]);
        let (mut sum, mut n) = (0.0, 0);
        for v in 0..res {
            for u in 0..res {
                // Interior: every pixel within 5 px is inside the silhouette.
                let inside = (-5i64..=5).all(|dv| {
                    (-5i64..=5).all(|du| {
                        let (uu, vv) = (u as i64 + du, v as i64 + dv);
                        uu >= 0 && vv >= 0 && uu < res as i64 && vv < res as i64 && masks[k][vv as usize * res + uu as usize]
                    })
                });
                if !inside {
                    continue;
                }
                let p = cam.unproject(u, v, views.depth_at(k, u, v)).unwrap();
                let nrm = normals[v * res + u].expect("interior pixel has a normal");
                sum += angle_deg(&nrm, &p);
                n += 1;
            }
        }
        assert!(n > 1000);
        let mean = sum / n as f64;
        assert!(mean < 3.0, "view {k}: mean angular error {mean}");
    }
}

#[test]
fn fused_sphere_cloud_lies_on_the_sphere() {
    let cams = make_six_view_rig(256, 1.0, 2.0).unwrap();
    let views = render_gt_views(&AnalyticScene::named("sphere").unwrap(), &cams).unwrap();
    let cloud = fuse_oriented_cloud(&views).unwrap();
    assert!(cloud.len() > 6 * 40_000);
    let worst = cloud.positions.iter().map(|p| (p.norm() - 1.0).abs()).fold(0.0, f64::max);
    assert!(worst < 1e-3, "{worst}");
    let mean_angle = cloud.positions.iter().zip(&cloud.normals).map(|(p, n)| angle_deg(n, p)).sum::<f64>() / cloud.len() as f64;
    assert!(mean_angle < 3.0, "{mean_angle}");
    assert!(cloud.normals.iter().all(|n| (n.norm() - 1.0).abs() < 1e-6));
}

fn sphere_cloud(n: usize, seed: u64) -> OrientedPointCloud {
    let positions = AnalyticScene::named("sphere").unwrap().sample_surface(n, seed);
    let normals = positions.iter().map(|p| p.normalize()).collect();
    let colors = positions
        .iter()
        .map(|p| if p.x > 0.0 { Vec3::new(1.0, 0.0, 0.0) } else { Vec3::new(0.0, 0.0, 1.0) })
        .collect();
    OrientedPointCloud {
        positions,
        normals,
        colors,
    }
}

#[test]
fn poisson_sphere_at_grid_128() {
    let cloud = sphere_cloud(100_000, 5);
    let mesh = poisson_reconstruct(&cloud, &PoissonOptions::default()).unwrap();
    let worst = mesh.vertices.iter().map(|v| (v.norm() - 1.0).abs()).fold(0.0, f64::max);
    assert!(worst < 0.02, "max radial deviation {worst}");
    assert!(mesh.is_watertight());
}

#[test]
fn poisson_cube_volume() {
    // Axis-aligned cube of half-side 0.5, sampled on its faces.
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let h = 0.5;
    let mut cloud = OrientedPointCloud::default();
    for _ in 0..60_000 {
        let axis = rng.gen_range(0..3);
        let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let mut p = Vec3::new(rng.gen_range(-h..h), rng.gen_range(-h..h), rng.gen_range(-h..h));
        p[axis] = sign * h;
        let mut n = Vec3::zeros();
        n[axis] = sign;
        cloud.positions.push(p);
        cloud.normals.push(n);
        cloud.colors.push(Vec3::new(0.5, 0.5, 0.5));
    }
    let mesh = poisson_reconstruct(&cloud, &PoissonOptions { grid: 96, ..Default::default() }).unwrap();
    let vol = voxel_volume(&mesh, 64).unwrap();
    let expected = 8.0 * h * h * h;
    assert!((vol - expected).abs() < 0.05 * expected, "volume {vol} vs {expected}");
}

#[test]
fn bicolor_sphere_colors_follow_hemispheres() {
    // About the density of six fused 256x256 sphere views, so the 8 nearest
    // neighbours of a vertex span roughly one pixel pitch.
    let cloud = sphere_cloud(300_000, 2);
    let opts = MeshingOptions {
        poisson: PoissonOptions { grid: 64, ..Default::default() },
        ..Default::default()
    };
    let mesh = colorize_vertices(&mesh_from_cloud(&cloud, &opts).unwrap(), &cloud);
    let seam = 3.0 * 2.0 / 256.0;
    let mut checked = 0;
    for (v, c) in mesh.vertices.iter().zip(&mesh.vertex_colors) {
        if v.x.abs() <= seam {
            continue;
        }
        let want = if v.x > 0.0 { Vec3::new(1.0, 0.0, 0.0) } else { Vec3::new(0.0, 0.0, 1.0) };
        assert!((c - want).norm() < 1e-12, "vertex {v:?} colored {c:?}");
        checked += 1;
    }
    assert!(checked > mesh.vertices.len() / 2);
}

#[test]
fn view_pipeline_is_watertight_and_deterministic() {
    let cams = make_six_view_rig(96, 1.0, 2.0).unwrap();
    let views = render_gt_views(&AnalyticScene::named("torus").unwrap(), &cams).unwrap();
    let opts = MeshingOptions {
        poisson: PoissonOptions { grid: 64, ..Default::default() },
        ..Default::default()
    };
    let a = mesh_from_views(&views, &opts).unwrap();
    let b = mesh_from_views(&views, &opts).unwrap();
    assert_eq!(a, b);
    assert!(a.is_watertight());
    a.validate().unwrap();
}
