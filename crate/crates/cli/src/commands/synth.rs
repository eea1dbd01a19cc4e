use std::path::PathBuf;

use morphfit::io::{write_camera, write_image, write_mesh, write_model, write_pts, Model};
use morphfit::synth::{make_synthetic_model, random_truth, render_scene, MIN_VERTICES};
use morphfit::CameraParams;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::create_dir;
use crate::manifest::{write_json, ManifestBuilder, MANIFEST_FILE};
use crate::CliError;

#[derive(Debug, Clone, clap::Args, Serialize)]
pub struct Args {
    /// Seed of the scene (truth parameters).
    #[arg(long)]
    pub seed: u64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Seed of the shape and texture models; defaults to --seed. Scenes that
    /// share it share the models.
    #[arg(long)]
    pub model_seed: Option<u64>,
    /// Target vertex count of the synthetic mesh.
    #[arg(long, default_value_t = 2500, value_parser = clap::value_parser!(u64).range(MIN_VERTICES as u64..))]
    pub n_vertices: u64,
    #[arg(long, default_value_t = 20)]
    pub n_shape: usize,
    #[arg(long, default_value_t = 20)]
    pub n_texture: usize,
    /// Texture channels; the image is saved as grayscale (1) or RGB (3).
    #[arg(long, default_value_t = 3, value_parser = channel_count)]
    pub channels: usize,
    #[arg(long, default_value_t = 256)]
    pub width: usize,
    #[arg(long, default_value_t = 256)]
    pub height: usize,
    /// Truth parameters are drawn within ± this many standard deviations.
    #[arg(long, default_value_t = 1.0)]
    pub amplitude: f64,
    /// Largest yaw and pitch of the truth pose, in degrees.
    #[arg(long, default_value_t = 15.0)]
    pub max_angle: f64,
}

fn channel_count(s: &str) -> Result<usize, String> {
    match s {
        "1" => Ok(1),
        "3" => Ok(3),
        _ => Err("expected 1 or 3".into()),
    }
}

#[derive(Serialize)]
struct Truth<'a> {
    seed: u64,
    model_seed: u64,
    p: Vec<f64>,
    lambda: Vec<f64>,
    camera: &'a CameraParams,
    interocular: f64,
}

pub fn run(args: &Args) -> Result<(), CliError> {
    if args.n_shape == 0 || args.n_texture == 0 {
        return Err(CliError::Usage("--n-shape and --n-texture must be positive".into()));
    }
    if !(args.amplitude.is_finite() && args.amplitude >= 0.0 && args.max_angle.is_finite()) {
        return Err(CliError::Usage("--amplitude and --max-angle must be finite, amplitude ≥ 0".into()));
    }
    create_dir(&args.out)?;
    let model_seed = args.model_seed.unwrap_or(args.seed);
    let mut manifest = ManifestBuilder::new("synth", args.seed, args);

    let (shape, texture) = make_synthetic_model(
        model_seed,
        args.n_vertices as usize,
        args.n_shape,
        args.n_texture,
        args.channels,
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let (p, c, lambda) = random_truth(
        &shape,
        &texture,
        args.width,
        args.height,
        args.amplitude,
        args.amplitude,
        args.max_angle.to_radians(),
        &mut rng,
    );
    let scene = render_scene(&shape, &texture, &p, &c, &lambda, args.height, args.width)?;

    let out = |name: &str| args.out.join(name);
    write_model(&out("shape.mfm"), &Model::Shape(shape))?;
    write_model(&out("texture.mfm"), &Model::Texture(texture))?;
    write_image(&out("image.png"), &scene.image)?;
    write_pts(&out("landmarks.pts"), &scene.landmarks)?;
    write_mesh(&out("truth_mesh.obj"), &scene.mesh)?;
    write_camera(&out("camera.json"), &c)?;
    let truth = Truth {
        seed: args.seed,
        model_seed,
        p: p.iter().copied().collect(),
        lambda: lambda.iter().copied().collect(),
        camera: &c,
        interocular: scene.interocular,
    };
    write_json(&out("truth.json"), &truth)?;
    for name in ["shape.mfm", "texture.mfm", "image.png", "landmarks.pts", "truth_mesh.obj", "camera.json", "truth.json"] {
        manifest.output(&out(name))?;
    }
    manifest.finish(&out(MANIFEST_FILE))?;
    Ok(())
}
