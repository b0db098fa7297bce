use std::process::ExitCode;

use anyhow::Result;
use clap::Args;

use orthofuse::epipolar::check_line_geometry;
use orthofuse::gradcheck::{check_attention_gradients, splat_gradient_suite};
use orthofuse::make_six_view_rig;

#[derive(Args)]
pub struct AttnArgs {
    /// Seeded instances per gradient suite.
    #[arg(long, default_value_t = 100)]
    instances: usize,
    /// Random in-ball points per ordered view pair.
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    #[arg(long, default_value_t = 64)]
    res: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Largest accepted relative gradient error.
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

pub fn run(a: &AttnArgs) -> Result<ExitCode> {
    let cams = make_six_view_rig(a.res, 1.0, 2.0)?;
    let lines = check_line_geometry(&cams, a.samples, a.seed)?;
    let failures: usize = lines.iter().map(|c| c.failures).sum();
    let offset = lines.iter().map(|c| c.max_offset).fold(0.0, f64::max);
    let geometry_ok = failures == 0 && lines.len() == 30;
    println!(
        "{} epipolar_lines pairs={} samples={} failures={} max_offset_px={:.3e}",
        verdict(geometry_ok),
        lines.len(),
        a.samples,
        failures,
        offset
    );

    let attention = (0..a.instances as u64)
        .map(|k| check_attention_gradients(a.seed + k).max_error())
        .fold(0.0, f64::max);
    let attention_ok = attention < a.tolerance;
    println!("{} attention_gradients instances={} max_rel_error={:.3e}", verdict(attention_ok), a.instances, attention);

    let splat = splat_gradient_suite(a.instances, a.seed);
    let splat_err = splat.iter().map(|(_, c)| c.max_error()).fold(0.0, f64::max);
    let splat_ok = splat_err < a.tolerance;
    println!("{} splat_gradients instances={} max_rel_error={:.3e}", verdict(splat_ok), splat.len(), splat_err);

    Ok(if geometry_ok && attention_ok && splat_ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}
