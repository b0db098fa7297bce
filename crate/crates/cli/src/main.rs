use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use orthofuse::camera::{default_up, DEFAULT_HALF_EXTENT, DEFAULT_PLANE_DISTANCE};
use orthofuse::io::{read_gaussian_ply, read_mesh, read_view_set, write_gaussian_ply, write_mesh, write_pfm, write_png_rgb, write_view_set};
use orthofuse::metrics::{EvalOptions, IcpOptions};
use orthofuse::recon::{mesh_from_views, MeshingOptions, PoissonOptions};
use orthofuse::scenes::view_id_from_name;
use orthofuse::{
    build_pixel_gaussians, evaluate_meshes, extended_view_rig, objective, render, render_gt_views, AnalyticScene,
    LossWeights, OrthoCamera, Vec3, ViewId,
};

mod ablation;
mod checks;

const THREADS_ENV: &str = "ORTHOFUSE_THREADS";

#[derive(Parser)]
#[command(name = "orthofuse", version, about = "Orthographic multi-view RGBD fusion, meshing and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render an analytic scene into a view set directory plus its ground-truth mesh.
    Gen(GenArgs),
    /// Lift a view set into pixel-aligned Gaussians, written as binary PLY.
    Fuse(FuseArgs),
    /// Splat a Gaussian PLY into one orthographic view.
    Render(RenderArgs),
    /// Reconstruct a colored mesh from a view set.
    Mesh(MeshArgs),
    /// Compare a predicted mesh against a ground-truth mesh.
    Eval(EvalArgs),
    /// Reconstruction error against the number of input views.
    AblateViews(ablation::AblateArgs),
    /// Epipolar line geometry and finite-difference gradient suites.
    AttnCheck(checks::AttnArgs),
    /// Training objective of a predicted view set against a ground-truth one.
    EvalLoss(EvalLossArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Named scene (sphere, box, torus, capsule, sphere-box, torus-capsule) or `random`.
    #[arg(long)]
    scene: String,
    /// Seed for `--scene random`.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 256)]
    res: usize,
    /// Number of views: 4, 6, 8 or 14.
    #[arg(long, default_value_t = 6)]
    views: usize,
    #[arg(long, default_value_t = DEFAULT_HALF_EXTENT)]
    half_extent: f64,
    #[arg(long, default_value_t = DEFAULT_PLANE_DISTANCE)]
    plane_distance: f64,
    /// Marching-cubes grid for the ground-truth mesh; 0 skips it.
    #[arg(long, default_value_t = 256)]
    gt_res: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FuseArgs {
    /// Manifest file or the directory holding `manifest.json`.
    manifest: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    opacity_threshold: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RenderArgs {
    /// Gaussian PLY written by `fuse`.
    cloud: PathBuf,
    /// Named view (front, back, left, right, top, bottom or a corner such as right-top-front).
    #[arg(long, conflicts_with = "direction")]
    view: Option<String>,
    /// Viewing direction `x,y,z`; image up is world +y made orthogonal.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    direction: Option<Vec<f64>>,
    #[arg(long, default_value_t = 256)]
    res: usize,
    #[arg(long, default_value_t = DEFAULT_HALF_EXTENT)]
    half_extent: f64,
    #[arg(long, default_value_t = DEFAULT_PLANE_DISTANCE)]
    plane_distance: f64,
    /// Color image (PNG).
    #[arg(long)]
    out: PathBuf,
    /// Expected depth (PFM).
    #[arg(long)]
    depth: Option<PathBuf>,
    /// Accumulated alpha (PFM).
    #[arg(long)]
    alpha: Option<PathBuf>,
}

#[derive(Args)]
struct MeshArgs {
    manifest: PathBuf,
    /// Output mesh; `.ply` or `.obj`.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 128)]
    grid: usize,
    #[arg(long, default_value_t = 4.0)]
    screening: f64,
    #[arg(long, default_value_t = 10)]
    smooth_iters: usize,
    #[arg(long, default_value_t = 0.5)]
    smooth_lambda: f64,
    /// Components with fewer faces than this fraction of the largest are dropped.
    #[arg(long, default_value_t = 0.02)]
    min_component: f64,
}

#[derive(Args)]
struct EvalArgs {
    pred: PathBuf,
    gt: PathBuf,
    /// Align the prediction with scale-adaptive ICP first.
    #[arg(long)]
    icp: bool,
    #[arg(long, default_value_t = orthofuse::metrics::CHAMFER_SAMPLES)]
    samples: usize,
    #[arg(long, default_value_t = orthofuse::metrics::IOU_GRID)]
    iou_grid: usize,
    /// Resolution of the 36 protocol renders.
    #[arg(long, default_value_t = 512)]
    render_res: usize,
    #[arg(long, default_value_t = 1.0)]
    object_radius: f64,
    /// Also print the report as one JSON object on a final line.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct EvalLossArgs {
    pred: PathBuf,
    gt: PathBuf,
    #[arg(long, default_value_t = 0)]
    nvs_seed: u64,
    #[arg(long, default_value_t = 10)]
    nvs_views: usize,
    #[arg(long, default_value_t = 2.0)]
    lambda_gm: f64,
}

fn init_threads() -> Result<()> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = value.trim().parse().with_context(|| format!("{THREADS_ENV}={value:?} is not a thread count"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring the thread pool")?;
    Ok(())
}

fn scene_from_flags(name: &str, seed: u64) -> Result<(AnalyticScene, String)> {
    if name == "random" {
        return Ok((AnalyticScene::random(seed), format!("random-{seed}")));
    }
    Ok((AnalyticScene::named(name)?, name.to_string()))
}

fn cmd_gen(a: &GenArgs) -> Result<()> {
    let (scene, label) = scene_from_flags(&a.scene, a.seed)?;
    let cams = extended_view_rig(a.views, a.res, a.half_extent, a.plane_distance)?;
    let views = render_gt_views(&scene, &cams)?;
    let provenance = format!("gen --scene {} --seed {} --res {} --views {}", a.scene, a.seed, a.res, a.views);
    let manifest = write_view_set(&a.out, &views, Some(&label), &provenance)?;
    println!("manifest={}", manifest.display());
    if a.gt_res > 0 {
        if a.gt_res < 8 {
            bail!("--gt-res must be 0 or at least 8");
        }
        let gt = a.out.join("gt.ply");
        write_mesh(&gt, &scene.mesh(a.gt_res))?;
        println!("gt_mesh={}", gt.display());
    }
    Ok(())
}

fn cmd_fuse(a: &FuseArgs) -> Result<()> {
    let (_, views) = read_view_set(&a.manifest)?;
    let cloud = build_pixel_gaussians(&views, a.opacity_threshold)?;
    write_gaussian_ply(&a.out, &cloud)?;
    println!("gaussians={}", cloud.len());
    Ok(())
}

fn render_camera(a: &RenderArgs) -> Result<OrthoCamera> {
    match (&a.view, &a.direction) {
        (Some(name), None) => {
            let cams = extended_view_rig(14, a.res, a.half_extent, a.plane_distance)?;
            let id = view_id_from_name(name).with_context(|| format!("--view: unknown view '{name}'"))?;
            Ok(cams.into_iter().find(|c| c.view_id == id).expect("every named view is in the 14-view rig"))
        }
        (None, Some(d)) => {
            if d.len() != 3 {
                bail!("--direction takes three comma-separated numbers, got {}", d.len());
            }
            let d = Vec3::new(d[0], d[1], d[2]);
            if !(d.norm() > 0.0) {
                bail!("--direction must be non-zero");
            }
            Ok(OrthoCamera::looking(ViewId::Custom(0), d, default_up(&d.normalize()), a.plane_distance, a.half_extent, a.res)?)
        }
        _ => bail!("exactly one of --view or --direction is required"),
    }
}

fn cmd_render(a: &RenderArgs) -> Result<()> {
    let cam = render_camera(a)?;
    let cloud = read_gaussian_ply(&a.cloud)?;
    let img = render(&cloud, &cam)?;
    write_png_rgb(&a.out, &img.color, img.width, img.height)?;
    if let Some(p) = &a.depth {
        write_pfm(p, &img.depth, img.width, img.height)?;
    }
    if let Some(p) = &a.alpha {
        write_pfm(p, &img.alpha, img.width, img.height)?;
    }
    Ok(())
}

fn meshing_options(a: &MeshArgs) -> MeshingOptions {
    MeshingOptions {
        poisson: PoissonOptions {
            grid: a.grid,
            screening: a.screening,
            ..Default::default()
        },
        smooth_iterations: a.smooth_iters,
        smooth_lambda: a.smooth_lambda,
        min_component_fraction: a.min_component,
    }
}

fn cmd_mesh(a: &MeshArgs) -> Result<()> {
    let (_, views) = read_view_set(&a.manifest)?;
    let mesh = mesh_from_views(&views, &meshing_options(a))?;
    write_mesh(&a.out, &mesh)?;
    println!("vertices={}\nfaces={}\nwatertight={}", mesh.vertices.len(), mesh.faces.len(), mesh.is_watertight());
    Ok(())
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let pred = read_mesh(&a.pred)?;
    let gt = read_mesh(&a.gt)?;
    let opts = EvalOptions {
        samples: a.samples,
        iou_grid: a.iou_grid,
        resolution: a.render_res,
        object_radius: a.object_radius,
        align: a.icp,
        icp: IcpOptions::default(),
    };
    let report = evaluate_meshes(&pred, &gt, &opts).with_context(|| format!("evaluating {} against {}", a.pred.display(), a.gt.display()))?;
    print!("{}", report.to_text());
    if a.json {
        println!("{}", serde_json::to_string(&report)?);
    }
    Ok(())
}

fn cmd_eval_loss(a: &EvalLossArgs) -> Result<()> {
    let (_, pred) = read_view_set(&a.pred)?;
    let (_, gt) = read_view_set(&a.gt)?;
    let w = LossWeights {
        gm: a.lambda_gm,
        nvs_views: a.nvs_views,
        ..Default::default()
    };
    let report = objective(&pred, &gt, &w, a.nvs_seed)?;
    print!("{}", report.to_text());
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    init_threads()?;
    let started = std::time::Instant::now();
    let code = match &cli.command {
        Command::Gen(a) => cmd_gen(a).map(|_| ExitCode::SUCCESS),
        Command::Fuse(a) => cmd_fuse(a).map(|_| ExitCode::SUCCESS),
        Command::Render(a) => cmd_render(a).map(|_| ExitCode::SUCCESS),
        Command::Mesh(a) => cmd_mesh(a).map(|_| ExitCode::SUCCESS),
        Command::Eval(a) => cmd_eval(a).map(|_| ExitCode::SUCCESS),
        Command::AblateViews(a) => ablation::run(a).map(|_| ExitCode::SUCCESS),
        Command::AttnCheck(a) => checks::run(a),
        Command::EvalLoss(a) => cmd_eval_loss(a).map(|_| ExitCode::SUCCESS),
    }?;
    info!("finished in {:.2?}", started.elapsed());
    Ok(code)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
