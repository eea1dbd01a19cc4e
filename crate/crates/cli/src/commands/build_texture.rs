use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use morphfit::features::descriptor_registry;
use morphfit::io::{read_image, read_pts, read_shape_model, write_model, Model};
use morphfit::texture::{iterative_refinement, RefinementConfig};

use super::{create_dir, descriptor_name, read_config};
use crate::manifest::ManifestBuilder;
use crate::CliError;

const IMAGE_EXTENSIONS: [&str; 4] = ["png", "ppm", "pgm", "pnm"];

#[derive(Debug, Clone, clap::Args)]
pub struct Args {
    /// Directory of training images (PNG or PPM/PGM).
    #[arg(long)]
    pub images: PathBuf,
    /// Directory holding `<image stem>.pts` for every image.
    #[arg(long)]
    pub landmarks: PathBuf,
    #[arg(long)]
    pub shape_model: PathBuf,
    #[arg(long, default_value = "identity", value_parser = descriptor_name)]
    pub features: String,
    /// Rounds of fit-then-rebuild; 1 builds from landmark-only fits.
    #[arg(long)]
    pub rounds: Option<usize>,
    /// Texture components to keep.
    #[arg(long)]
    pub n_texture: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Refinement configuration JSON (as recorded in a run manifest); flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output model file. The manifest and per-round residuals are written next
    /// to it as `<out>.manifest.json` and `<out>.rounds.csv`.
    #[arg(long)]
    pub out: PathBuf,
}

/// Image files of `dir` in name order, each with its landmark file.
fn training_pairs(images: &Path, landmarks: &Path) -> Result<Vec<(PathBuf, PathBuf)>, CliError> {
    let entries = std::fs::read_dir(images).map_err(|e| CliError::io(images, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| CliError::io(images, e))?.path();
        let is_image = path
            .extension()
            .map(|e| e.to_string_lossy().to_ascii_lowercase())
            .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.as_str()));
        if is_image {
            files.push(path);
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(CliError::Runtime(format!("{}: no PNG/PPM images found", images.display())));
    }
    files
        .into_iter()
        .map(|img| {
            let mut name = img.file_stem().expect("file has an extension").to_owned();
            name.push(".pts");
            let pts = landmarks.join(name);
            if pts.is_file() {
                Ok((img, pts))
            } else {
                Err(CliError::Runtime(format!(
                    "{}: no landmark file for {}",
                    pts.display(),
                    img.display()
                )))
            }
        })
        .collect()
}

fn sidecar(out: &Path, suffix: &str) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_owned();
    name.push(suffix);
    out.with_file_name(name)
}

pub fn run(args: &Args) -> Result<(), CliError> {
    let mut cfg: RefinementConfig = match &args.config {
        Some(path) => read_config(path)?,
        None => RefinementConfig::default(),
    };
    if let Some(r) = args.rounds {
        cfg.rounds = r;
    }
    if let Some(n) = args.n_texture {
        cfg.n_texture = n;
    }
    if let Some(s) = args.seed {
        cfg.fit.seed = s;
    }
    if cfg.rounds == 0 || cfg.n_texture == 0 {
        return Err(CliError::Usage("--rounds and --n-texture must be positive".into()));
    }
    cfg.fit.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }

    let mut manifest = ManifestBuilder::new("build-texture", cfg.fit.seed, &cfg);
    manifest.input(&args.shape_model)?;
    let pairs = training_pairs(&args.images, &args.landmarks)?;
    let mut images = Vec::with_capacity(pairs.len());
    let mut landmarks = Vec::with_capacity(pairs.len());
    for (img, pts) in &pairs {
        manifest.input(img)?;
        manifest.input(pts)?;
        images.push(read_image(img)?);
        landmarks.push(read_pts(pts)?);
    }
    let shape = read_shape_model(&args.shape_model)?;
    let extractor = descriptor_registry(&args.features)?;

    let started = std::time::Instant::now();
    let result = iterative_refinement(&images, &landmarks, &shape, extractor.as_ref(), &cfg)?;
    manifest.timing("refinement_seconds", started.elapsed().as_secs_f64());
    let dropped = result.fits.iter().filter(|f| f.is_none()).count();
    if dropped > 0 {
        log::warn!("{dropped} of {} images were dropped", pairs.len());
    }

    write_model(&args.out, &Model::Texture(result.model))?;
    let rounds_path = sidecar(&args.out, ".rounds.csv");
    let mut text = String::from("round,residual\n");
    for (i, r) in result.residuals.iter().enumerate() {
        writeln!(text, "{i},{r}").expect("writing to a String");
    }
    std::fs::write(&rounds_path, text).map_err(|e| CliError::io(&rounds_path, e))?;
    manifest.output(&args.out)?;
    manifest.output(&rounds_path)?;
    manifest.finish(&sidecar(&args.out, ".manifest.json"))?;
    Ok(())
}
