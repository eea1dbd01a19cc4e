use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use morphfit::fitter::{ced_auc, normalized_dense_error};
use morphfit::io::read_mesh;
use serde::Serialize;

use super::create_dir;
use crate::manifest::{write_json, ManifestBuilder, MANIFEST_FILE};
use crate::CliError;

/// Default CED threshold on the normalised dense error.
pub const DEFAULT_THRESHOLD: f64 = 0.05;

#[derive(Debug, Clone, clap::Args, Serialize)]
pub struct Args {
    /// Fitted mesh (OBJ or PLY); repeat for several scenes.
    #[arg(long, required = true)]
    pub fitted: Vec<PathBuf>,
    /// Ground-truth mesh in correspondence with the fitted one; one per --fitted.
    #[arg(long, required = true)]
    pub truth: Vec<PathBuf>,
    /// Inter-ocular distance of each truth mesh (one value for all, or one per
    /// scene). When omitted it is read from `truth.json` next to each truth mesh.
    #[arg(long)]
    pub interocular: Vec<f64>,
    /// Errors above this count as failures; the CED is integrated up to it.
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Serialize)]
struct SceneReport {
    name: String,
    fitted: String,
    truth: String,
    interocular: f64,
    n_vertices: usize,
    mean_error: f64,
    auc: f64,
    failure_rate: f64,
}

#[derive(Serialize)]
struct Report {
    threshold: f64,
    n_scenes: usize,
    n_vertices: usize,
    /// Over all vertices of all scenes.
    auc: f64,
    failure_rate: f64,
    mean_error: f64,
    scenes: Vec<SceneReport>,
}

fn interocular_from_truth_json(truth_mesh: &Path) -> Result<f64, CliError> {
    let path = truth_mesh.with_file_name("truth.json");
    let bytes = std::fs::read(&path).map_err(|e| {
        CliError::Runtime(format!(
            "{}: {e}; pass --interocular or place truth.json next to the truth mesh",
            path.display()
        ))
    })?;
    let value: serde_json::Value = serde_json::from_slice(&bytes)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    value["interocular"]
        .as_f64()
        .ok_or_else(|| CliError::Runtime(format!("{}: no numeric 'interocular' field", path.display())))
}

pub fn run(args: &Args) -> Result<(), CliError> {
    let n = args.fitted.len();
    if args.truth.len() != n {
        return Err(CliError::Usage(format!("{n} --fitted meshes but {} --truth meshes", args.truth.len())));
    }
    if !(args.interocular.is_empty() || args.interocular.len() == 1 || args.interocular.len() == n) {
        return Err(CliError::Usage(format!(
            "--interocular needs 1 or {n} values, got {}",
            args.interocular.len()
        )));
    }
    if !(args.threshold.is_finite() && args.threshold > 0.0) {
        return Err(CliError::Usage("--threshold must be positive".into()));
    }
    create_dir(&args.out)?;
    let mut manifest = ManifestBuilder::new("eval", 0, args);

    let mut scenes = Vec::with_capacity(n);
    let mut all_errors = Vec::new();
    let mut per_vertex = String::from("scene,vertex,error\n");
    for (i, (fitted_path, truth_path)) in args.fitted.iter().zip(&args.truth).enumerate() {
        manifest.input(fitted_path)?;
        manifest.input(truth_path)?;
        let fitted = read_mesh(fitted_path)?;
        let truth = read_mesh(truth_path)?;
        let interocular = match args.interocular.as_slice() {
            [] => interocular_from_truth_json(truth_path)?,
            [d] => *d,
            many => many[i],
        };
        let errors = normalized_dense_error(&fitted, &truth, interocular)?;
        let summary = ced_auc(&errors, args.threshold)?;
        let name = format!("scene{i}");
        for (v, e) in errors.iter().enumerate() {
            writeln!(per_vertex, "{name},{v},{e}").expect("writing to a String");
        }
        scenes.push(SceneReport {
            name,
            fitted: fitted_path.display().to_string(),
            truth: truth_path.display().to_string(),
            interocular,
            n_vertices: errors.len(),
            mean_error: errors.iter().sum::<f64>() / errors.len() as f64,
            auc: summary.auc,
            failure_rate: summary.failure_rate,
        });
        all_errors.extend(errors);
    }

    let pooled = ced_auc(&all_errors, args.threshold)?;
    let report = Report {
        threshold: args.threshold,
        n_scenes: scenes.len(),
        n_vertices: all_errors.len(),
        auc: pooled.auc,
        failure_rate: pooled.failure_rate,
        mean_error: all_errors.iter().sum::<f64>() / all_errors.len() as f64,
        scenes,
    };
    let mut ced = String::from("error,fraction\n");
    for (x, y) in &pooled.curve {
        writeln!(ced, "{x},{y}").expect("writing to a String");
    }

    let report_path = args.out.join("report.json");
    write_json(&report_path, &report)?;
    let errors_path = args.out.join("errors.csv");
    std::fs::write(&errors_path, per_vertex).map_err(|e| CliError::io(&errors_path, e))?;
    let ced_path = args.out.join("ced.csv");
    std::fs::write(&ced_path, ced).map_err(|e| CliError::io(&ced_path, e))?;
    for path in [&report_path, &errors_path, &ced_path] {
        manifest.output(path)?;
    }
    manifest.finish(&args.out.join(MANIFEST_FILE))?;
    Ok(())
}
