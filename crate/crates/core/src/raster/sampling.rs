use nalgebra::DVector;

use super::mask::ObservationMask;
use crate::camera::ProjectedShape;
use crate::features::FeatureImage;
use crate::imaging::Image;

/// Feature values sampled at projected vertices, `values[v·C + ch]`.
///
/// Entries of unobserved vertices are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledTexture {
    pub values: DVector<f64>,
    pub mask: ObservationMask,
    pub channels: usize,
}

impl SampledTexture {
    /// Per-entry observation flags.
    pub fn entry_mask(&self) -> Vec<bool> {
        self.mask.replicate(self.channels)
    }
}

fn sample_image(image: &Image, proj: &ProjectedShape, mask: &ObservationMask) -> (DVector<f64>, ObservationMask) {
    let c = image.channels();
    let n = proj.len();
    let mut values = DVector::zeros(n * c);
    let mut out = mask.clone();
    for v in 0..n {
        if !mask.get(v) {
            continue;
        }
        let q = proj.points[v];
        let slot = &mut values.as_mut_slice()[v * c..(v + 1) * c];
        if !proj.in_front(v) || !image.sample_bilinear(q.x, q.y, slot) {
            slot.iter_mut().for_each(|x| *x = 0.0);
            out.set(v, false);
        }
    }
    (values, out)
}

/// Bilinear samples of every feature channel at the observed projected vertices.
/// Vertices projecting outside the image are dropped from the mask.
pub fn sample_features(f: &FeatureImage, proj: &ProjectedShape, mask: &ObservationMask) -> SampledTexture {
    let (values, mask) = sample_image(f.data(), proj, mask);
    SampledTexture {
        values,
        mask,
        channels: f.channels(),
    }
}

/// `(∂F/∂x, ∂F/∂y)` sampled at the projected vertices, zero where unobserved.
pub fn sample_feature_gradients(
    f: &FeatureImage,
    proj: &ProjectedShape,
    mask: &ObservationMask,
) -> (DVector<f64>, DVector<f64>) {
    let (gx, m) = sample_image(f.grad_x(), proj, mask);
    let (gy, _) = sample_image(f.grad_y(), proj, &m);
    (gx, gy)
}
