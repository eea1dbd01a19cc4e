use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use morphfit::features::descriptor_registry;
use morphfit::fitter::{fit, Algorithm, CostTerms, FitConfig, IterationRecord, StopReason};
use morphfit::io::{read_image, read_pts, read_shape_model, read_texture_model, write_mesh};
use morphfit::CameraParams;
use serde::Serialize;

use super::{create_dir, descriptor_name, read_config};
use crate::manifest::{write_json, ManifestBuilder, MANIFEST_FILE};
use crate::CliError;

#[derive(Debug, Clone, clap::Args)]
pub struct Args {
    #[arg(long)]
    pub image: PathBuf,
    /// Landmarks in iBUG `.pts` format, in the model's landmark order.
    #[arg(long)]
    pub landmarks: PathBuf,
    #[arg(long)]
    pub shape_model: PathBuf,
    #[arg(long)]
    pub texture_model: PathBuf,
    #[arg(long, default_value = "identity", value_parser = descriptor_name)]
    pub features: String,
    /// One of {project-out, simultaneous}.
    #[arg(long, value_parser = algorithm_name)]
    pub algorithm: Option<Algorithm>,
    #[arg(long)]
    pub out: PathBuf,
    /// Fit configuration JSON (as recorded in a run manifest); flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Residual mask size K.
    #[arg(long)]
    pub residual_size: Option<usize>,
    #[arg(long)]
    pub landmark_weight: Option<f64>,
    #[arg(long)]
    pub shape_prior_weight: Option<f64>,
    #[arg(long)]
    pub texture_prior_weight: Option<f64>,
    #[arg(long)]
    pub optimize_focal: bool,
    /// Draw a new residual subset every iteration.
    #[arg(long)]
    pub resample_mask: bool,
    /// Fitted mesh format.
    #[arg(long, default_value = "obj", value_parser = ["obj", "ply"])]
    pub mesh_format: String,
}

fn algorithm_name(s: &str) -> Result<Algorithm, String> {
    s.parse::<Algorithm>().map_err(|_| format!("expected one of {{{}}}", Algorithm::NAMES.join(", ")))
}

pub fn config_from(args: &Args) -> Result<FitConfig, CliError> {
    let mut cfg: FitConfig = match &args.config {
        Some(path) => read_config(path)?,
        None => FitConfig::default(),
    };
    if let Some(a) = args.algorithm {
        cfg.algorithm = a;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(n) = args.max_iters {
        cfg.max_iters = n;
    }
    if let Some(k) = args.residual_size {
        cfg.residual_size = k;
    }
    if args.landmark_weight.is_some() {
        cfg.landmark_weight = args.landmark_weight;
    }
    if let Some(w) = args.shape_prior_weight {
        cfg.shape_prior_weight = w;
    }
    if let Some(w) = args.texture_prior_weight {
        cfg.texture_prior_weight = w;
    }
    cfg.optimize_focal |= args.optimize_focal;
    cfg.resample_mask |= args.resample_mask;
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(cfg)
}

#[derive(Serialize)]
struct FitParams {
    algorithm: Algorithm,
    converged: bool,
    stop_reason: StopReason,
    iterations: usize,
    p: Vec<f64>,
    lambda: Vec<f64>,
    camera: CameraParams,
    final_cost: Option<CostTerms>,
}

/// Header of the per-iteration log.
pub const LOG_COLUMNS: &str = "iteration,n_active,step_scale,data,landmark,shape_prior,texture_prior,total,\
delta_p_norm,delta_c_norm,delta_lambda_norm,step_seconds,seconds";

fn log_csv(log: &[IterationRecord]) -> String {
    let mut text = String::from(LOG_COLUMNS);
    text.push('\n');
    for r in log {
        let c = &r.cost_after;
        writeln!(
            text,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.iteration,
            r.n_active,
            r.step_scale,
            c.data,
            c.landmark,
            c.shape_prior,
            c.texture_prior,
            c.total,
            r.delta_p_norm,
            r.delta_c_norm,
            r.delta_lambda_norm,
            r.step_seconds,
            r.seconds
        )
        .expect("writing to a String");
    }
    text
}

pub fn run(args: &Args) -> Result<(), CliError> {
    let cfg = config_from(args)?;
    create_dir(&args.out)?;
    let mut manifest = ManifestBuilder::new("fit", cfg.seed, &cfg);
    let inputs: [&Path; 4] = [&args.image, &args.landmarks, &args.shape_model, &args.texture_model];
    for path in inputs {
        manifest.input(path)?;
    }

    let image = read_image(&args.image)?;
    let landmarks = read_pts(&args.landmarks)?;
    let shape = read_shape_model(&args.shape_model)?;
    let texture = read_texture_model(&args.texture_model)?;
    let extractor = descriptor_registry(&args.features)?;

    let started = std::time::Instant::now();
    let result = fit(&image, &landmarks, &shape, &texture, extractor.as_ref(), &cfg)?;
    manifest.timing("fit_seconds", started.elapsed().as_secs_f64());
    log::info!(
        "{} after {} iterations ({:?})",
        if result.converged { "converged" } else { "stopped" },
        result.state.log.len(),
        result.stop_reason
    );

    let mesh_path = args.out.join(format!("mesh.{}", args.mesh_format));
    write_mesh(&mesh_path, &result.mesh)?;
    let params = FitParams {
        algorithm: cfg.algorithm,
        converged: result.converged,
        stop_reason: result.stop_reason,
        iterations: result.state.log.len(),
        p: result.state.p.iter().copied().collect(),
        lambda: result.state.lambda.iter().copied().collect(),
        camera: result.state.c,
        final_cost: result.state.log.last().map(|r| r.cost_after),
    };
    let params_path = args.out.join("params.json");
    write_json(&params_path, &params)?;
    let log_path = args.out.join("log.csv");
    std::fs::write(&log_path, log_csv(&result.state.log)).map_err(|e| CliError::io(&log_path, e))?;
    for path in [&mesh_path, &params_path, &log_path] {
        manifest.output(path)?;
    }
    manifest.finish(&args.out.join(MANIFEST_FILE))?;
    Ok(())
}
