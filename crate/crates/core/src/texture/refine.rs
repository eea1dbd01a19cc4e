use nalgebra::{DVector, Vector2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::matrix::{assemble_texture_matrix, build_texture_model, MaskedTextureMatrix};
use super::pcp::PcpConfig;
use crate::camera::CameraParams;
use crate::error::{Error, Result};
use crate::features::FeatureExtractor;
use crate::fitter::{fit_from, fit_landmarks_only, least_squares_texture, FitConfig, Models};
use crate::imaging::Image;
use crate::model::{ShapeModel, TextureModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementConfig {
    pub rounds: usize,
    pub n_texture: usize,
    pub pcp: PcpConfig,
    pub fit: FitConfig,
}

impl Default for RefinementConfig {
    fn default() -> Self {
        Self {
            rounds: 1,
            n_texture: 50,
            pcp: PcpConfig::default(),
            fit: FitConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RefinementResult {
    pub model: TextureModel,
    /// Mean texture reconstruction residual after each round.
    pub residuals: Vec<f64>,
    /// Final `(p, c)` per input image; `None` for images that were dropped.
    pub fits: Vec<Option<(DVector<f64>, CameraParams)>>,
}

/// Mean over samples of `‖P_Ω(x − x̂)‖² / ‖P_Ω x‖²`, where `x̂` is the
/// least-squares reconstruction from the model on the observed entries.
pub fn reconstruction_residual(matrix: &MaskedTextureMatrix, model: &TextureModel) -> Result<f64> {
    let ch = matrix.channels();
    let rows = matrix.x().nrows();
    let mut total = 0.0;
    let mut count = 0usize;
    for j in 0..matrix.n_samples() {
        let omega = &matrix.omega()[j * rows..(j + 1) * rows];
        let vertices: Vec<usize> = (0..rows / ch).filter(|&v| omega[v * ch]).collect();
        if vertices.len() * ch < model.n_components() {
            continue;
        }
        let x = DVector::from_iterator(
            vertices.len() * ch,
            vertices.iter().flat_map(|&v| (0..ch).map(move |c| matrix.x()[(v * ch + c, j)])),
        );
        let mean = model.mean_rows(&vertices);
        let basis = model.basis_rows(&vertices);
        let lambda = least_squares_texture(&x, &mean, &basis)?;
        let r = &x - mean - basis * lambda;
        let denom = x.norm_squared();
        if denom > 0.0 {
            total += r.norm_squared() / denom;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::invalid("no sample has enough observed entries"));
    }
    Ok(total / count as f64)
}

/// Texture model refinement: landmark-only fits, then alternately rebuild the
/// texture model and refit every image with the full cost. Images that fail
/// to fit are dropped from that round with a warning.
pub fn iterative_refinement(
    images: &[Image],
    landmarks: &[Vec<Vector2<f64>>],
    shape: &ShapeModel,
    extractor: &dyn FeatureExtractor,
    cfg: &RefinementConfig,
) -> Result<RefinementResult> {
    if images.is_empty() {
        return Err(Error::invalid("iterative refinement needs at least one image"));
    }
    if images.len() != landmarks.len() {
        return Err(Error::invalid(format!(
            "{} images but {} landmark sets",
            images.len(),
            landmarks.len()
        )));
    }
    if cfg.rounds == 0 {
        return Err(Error::invalid("refinement needs at least one round"));
    }
    let mut fits: Vec<Option<(DVector<f64>, CameraParams)>> = images
        .par_iter()
        .zip(landmarks.par_iter())
        .enumerate()
        .map(|(i, (img, lm))| {
            match fit_landmarks_only(lm, shape, (img.width(), img.height()), &cfg.fit) {
                Ok(fit) => Some(fit),
                Err(e) => {
                    log::warn!("image {i}: landmark fit failed ({e}), dropped");
                    None
                }
            }
        })
        .collect();

    let mut residuals = Vec::with_capacity(cfg.rounds);
    let mut model = None;
    for round in 0..cfg.rounds {
        let kept: Vec<usize> = (0..images.len()).filter(|&i| fits[i].is_some()).collect();
        let kept_images: Vec<Image> = kept.iter().map(|&i| images[i].clone()).collect();
        let kept_fits: Vec<(DVector<f64>, CameraParams)> =
            kept.iter().map(|&i| fits[i].clone().expect("kept")).collect();
        let matrix = assemble_texture_matrix(&kept_images, &kept_fits, shape, extractor)?;
        let n_t = cfg.n_texture.min(matrix.n_samples().saturating_sub(1)).max(1);
        if n_t < cfg.n_texture {
            log::warn!("round {round}: only {} samples, keeping {n_t} texture components", matrix.n_samples());
        }
        let (texture, pcp) = build_texture_model(&matrix, n_t, &cfg.pcp)?;
        let residual = reconstruction_residual(&matrix, &texture)?;
        log::info!(
            "round {round}: {} samples, PCP {} iterations, residual {residual:.6e}",
            matrix.n_samples(),
            pcp.iterations
        );
        residuals.push(residual);

        if round + 1 < cfg.rounds {
            let models = Models::new(shape, &texture)?;
            let refits: Vec<Option<(DVector<f64>, CameraParams)>> = kept
                .par_iter()
                .map(|&i| {
                    let (p, c) = fits[i].clone().expect("kept");
                    let features = match extractor.extract(&images[i]) {
                        Ok(f) => f,
                        Err(e) => {
                            log::warn!("image {i}: feature extraction failed ({e}), dropped");
                            return None;
                        }
                    };
                    match fit_from(&features, &landmarks[i], &models, p, c, &cfg.fit) {
                        Ok(r) => Some((r.state.p, r.state.c)),
                        Err(e) => {
                            log::warn!("image {i}: refit failed ({e}), dropped");
                            None
                        }
                    }
                })
                .collect();
            for (&i, r) in kept.iter().zip(refits) {
                fits[i] = r;
            }
        }
        model = Some(texture);
    }
    Ok(RefinementResult {
        model: model.expect("at least one round"),
        residuals,
        fits,
    })
}
