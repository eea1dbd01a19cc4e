use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::pcp::{pcp_missing_values, PcpConfig, PcpResult};
use crate::camera::{camera_apply, CameraParams};
use crate::error::{check_len, Error, Result};
use crate::features::FeatureExtractor;
use crate::imaging::Image;
use crate::model::{pca_from_samples, ShapeModel, TextureModel};
use crate::raster::{occlusion_mask_raycast, sample_features, SampledTexture};

/// Texture samples as columns of `X` (CN×M) with observed-entry flags Ω.
#[derive(Debug, Clone)]
pub struct MaskedTextureMatrix {
    x: DMatrix<f64>,
    /// Column-major, same layout as `x`.
    omega: Vec<bool>,
    channels: usize,
    /// Indices of input samples that were dropped because nothing was observed.
    excluded: Vec<usize>,
}

impl MaskedTextureMatrix {
    /// Zeroes unobserved entries of `x`.
    pub fn new(mut x: DMatrix<f64>, omega: Vec<bool>, channels: usize) -> Result<Self> {
        check_len("observation mask", x.len(), omega.len())?;
        if channels == 0 || x.nrows() % channels != 0 {
            return Err(Error::invalid(format!(
                "{} rows are not a multiple of {channels} channels",
                x.nrows()
            )));
        }
        for (v, &o) in x.iter_mut().zip(&omega) {
            if !o {
                *v = 0.0;
            }
        }
        Ok(Self {
            x,
            omega,
            channels,
            excluded: Vec::new(),
        })
    }

    pub fn from_samples(samples: &[SampledTexture]) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::invalid("no texture samples"))?;
        let rows = first.values.len();
        let mut x = DMatrix::zeros(rows, samples.len());
        let mut omega = Vec::with_capacity(rows * samples.len());
        for (j, s) in samples.iter().enumerate() {
            check_len("texture sample", rows, s.values.len())?;
            x.set_column(j, &s.values);
            omega.extend(s.entry_mask());
        }
        Self::new(x, omega, first.channels)
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn omega(&self) -> &[bool] {
        &self.omega
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn n_samples(&self) -> usize {
        self.x.ncols()
    }

    pub fn excluded(&self) -> &[usize] {
        &self.excluded
    }

    pub fn observed_fraction(&self) -> f64 {
        self.omega.iter().filter(|&&o| o).count() as f64 / self.omega.len().max(1) as f64
    }
}

/// Samples the features of every image at its fitted projection, with raycast
/// occlusion masks. Images whose projection misses the frame entirely are
/// excluded with a warning.
pub fn assemble_texture_matrix(
    images: &[Image],
    fits: &[(DVector<f64>, CameraParams)],
    model: &ShapeModel,
    extractor: &dyn FeatureExtractor,
) -> Result<MaskedTextureMatrix> {
    if images.len() != fits.len() {
        return Err(Error::invalid(format!(
            "{} images but {} fits",
            images.len(),
            fits.len()
        )));
    }
    if images.is_empty() {
        return Err(Error::invalid("no images to build a texture matrix from"));
    }
    let samples: Vec<Result<SampledTexture>> = images
        .par_iter()
        .zip(fits.par_iter())
        .map(|(img, (p, c))| sample_texture(img, p, c, model, extractor))
        .collect();
    let mut kept = Vec::new();
    let mut excluded = Vec::new();
    for (i, s) in samples.into_iter().enumerate() {
        let s = s?;
        if s.mask.count() == 0 {
            log::warn!("image {i}: fitted projection observes no vertex, excluded");
            excluded.push(i);
        } else {
            kept.push(s);
        }
    }
    if kept.is_empty() {
        return Err(Error::OutOfFrame("no image observes any vertex".into()));
    }
    let mut matrix = MaskedTextureMatrix::from_samples(&kept)?;
    matrix.excluded = excluded;
    Ok(matrix)
}

/// One texture sample `F(W(p, c))` with its raycast occlusion mask.
pub fn sample_texture(
    image: &Image,
    p: &DVector<f64>,
    c: &CameraParams,
    model: &ShapeModel,
    extractor: &dyn FeatureExtractor,
) -> Result<SampledTexture> {
    let features = extractor.extract(image)?;
    let mesh = model.shape_instance(p)?;
    let mask = occlusion_mask_raycast(&mesh, c);
    let proj = camera_apply(mesh.to_flat().as_slice(), c)?;
    Ok(sample_features(&features, &proj, &mask))
}

/// Robust texture model: PCP on the masked matrix, then PCA of the low-rank columns.
pub fn build_texture_model(
    matrix: &MaskedTextureMatrix,
    n_t: usize,
    cfg: &PcpConfig,
) -> Result<(TextureModel, PcpResult)> {
    let (rows, cols) = matrix.x.shape();
    if cols < 2 {
        return Err(Error::invalid(format!("texture model needs at least 2 samples, got {cols}")));
    }
    let lambda = cfg.lambda_for(rows, cols);
    let pcp = pcp_missing_values(&matrix.x, &matrix.omega, lambda, cfg.tol, cfg.max_iter)?;
    let pca = pca_from_samples(&pcp.low_rank, n_t)?;
    Ok((TextureModel::new(pca, matrix.channels)?, pcp))
}
