//! Dense feature extraction `F: H×W → H×W×C` behind a pluggable interface.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::Image;

/// Dense feature map together with its spatial gradients.
#[derive(Debug, Clone)]
pub struct FeatureImage {
    data: Image,
    grad_x: Image,
    grad_y: Image,
    descriptor: String,
}

impl FeatureImage {
    pub fn new(data: Image, descriptor: impl Into<String>) -> Result<Self> {
        if !data.is_finite() {
            return Err(Error::NonFinite("feature image contains non-finite values".into()));
        }
        let (grad_x, grad_y) = data.gradients();
        Ok(Self {
            data,
            grad_x,
            grad_y,
            descriptor: descriptor.into(),
        })
    }

    pub fn data(&self) -> &Image {
        &self.data
    }

    pub fn grad_x(&self) -> &Image {
        &self.grad_x
    }

    pub fn grad_y(&self) -> &Image {
        &self.grad_y
    }

    pub fn channels(&self) -> usize {
        self.data.channels()
    }

    pub fn width(&self) -> usize {
        self.data.width()
    }

    pub fn height(&self) -> usize {
        self.data.height()
    }

    pub fn descriptor(&self) -> &str {
        &self.descriptor
    }
}

pub trait FeatureExtractor: Send + Sync {
    fn name(&self) -> &str;

    /// Channel count produced for an input with `input_channels` channels.
    fn output_channels(&self, input_channels: usize) -> usize;

    fn extract(&self, image: &Image) -> Result<FeatureImage>;
}

/// Pixel values used directly as features.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityFeatures;

impl FeatureExtractor for IdentityFeatures {
    fn name(&self) -> &str {
        "identity"
    }

    fn output_channels(&self, input_channels: usize) -> usize {
        input_channels
    }

    fn extract(&self, image: &Image) -> Result<FeatureImage> {
        FeatureImage::new(image.clone(), self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientationHistogramConfig {
    pub bins: usize,
    pub radius: usize,
    pub sigma: f64,
}

impl Default for OrientationHistogramConfig {
    fn default() -> Self {
        Self {
            bins: 8,
            radius: 4,
            sigma: 2.0,
        }
    }
}

/// Dense histogram of gradient orientations.
///
/// Each pixel accumulates the gradient magnitudes of its `(2r+1)²`
/// neighbourhood, Gaussian weighted and linearly split between the two
/// nearest of `B` orientation bins (bin `b` centred at `2πb/B`), then the
/// descriptor is scaled to unit ℓ2 norm.
#[derive(Debug, Clone, Copy, Default)]
pub struct OrientationHistogram {
    pub config: OrientationHistogramConfig,
}

impl OrientationHistogram {
    pub fn new(config: OrientationHistogramConfig) -> Result<Self> {
        if config.bins < 2 {
            return Err(Error::invalid(format!("need at least 2 bins, got {}", config.bins)));
        }
        if !(config.sigma.is_finite() && config.sigma > 0.0) {
            return Err(Error::invalid(format!("sigma must be positive, got {}", config.sigma)));
        }
        Ok(Self { config })
    }
}

impl FeatureExtractor for OrientationHistogram {
    fn name(&self) -> &str {
        "dense-oh"
    }

    fn output_channels(&self, _input_channels: usize) -> usize {
        self.config.bins
    }

    fn extract(&self, image: &Image) -> Result<FeatureImage> {
        let OrientationHistogramConfig {
            bins,
            radius,
            sigma,
        } = self.config;
        let (w, h) = (image.width(), image.height());
        if w <= 2 * radius || h <= 2 * radius {
            return Err(Error::invalid(format!(
                "image {w}×{h} too small for descriptor radius {radius}"
            )));
        }
        let gray = image.to_gray();
        let (gx, gy) = gray.gradients();

        // per-pixel soft-binned votes, one plane per bin
        let mut votes = vec![vec![0.0; w * h]; bins];
        for i in 0..w * h {
            let (dx, dy) = (gx.data()[i], gy.data()[i]);
            let mag = dx.hypot(dy);
            if mag == 0.0 {
                continue;
            }
            let pos = (dy.atan2(dx).rem_euclid(TAU) / TAU * bins as f64).rem_euclid(bins as f64);
            let b0 = (pos.floor() as usize) % bins;
            let frac = pos - pos.floor();
            votes[b0][i] += mag * (1.0 - frac);
            votes[(b0 + 1) % bins][i] += mag * frac;
        }

        let kernel: Vec<f64> = (0..=2 * radius)
            .map(|k| {
                let d = k as f64 - radius as f64;
                (-d * d / (2.0 * sigma * sigma)).exp()
            })
            .collect();
        let smoothed: Vec<Vec<f64>> = votes
            .par_iter()
            .map(|plane| separable_filter(plane, w, h, &kernel))
            .collect();

        let mut data = vec![0.0; w * h * bins];
        for i in 0..w * h {
            let norm = smoothed.iter().map(|p| p[i] * p[i]).sum::<f64>().sqrt();
            if norm > 0.0 {
                for (b, plane) in smoothed.iter().enumerate() {
                    data[i * bins + b] = plane[i] / norm;
                }
            }
        }
        FeatureImage::new(Image::new(w, h, bins, data)?, self.name())
    }
}

/// Zero-padded separable correlation with a symmetric odd-length kernel.
fn separable_filter(plane: &[f64], w: usize, h: usize, kernel: &[f64]) -> Vec<f64> {
    let r = kernel.len() / 2;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, wk) in kernel.iter().enumerate() {
                let xx = x as isize + k as isize - r as isize;
                if xx >= 0 && (xx as usize) < w {
                    acc += wk * plane[y * w + xx as usize];
                }
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, wk) in kernel.iter().enumerate() {
                let yy = y as isize + k as isize - r as isize;
                if yy >= 0 && (yy as usize) < h {
                    acc += wk * tmp[yy as usize * w + x];
                }
            }
            out[y * w + x] = acc;
        }
    }
    out
}

type Factory = Arc<dyn Fn() -> Box<dyn FeatureExtractor> + Send + Sync>;

/// Named feature extractors; `identity` and `dense-oh` are always present.
#[derive(Clone)]
pub struct DescriptorRegistry {
    factories: BTreeMap<String, Factory>,
}

impl Default for DescriptorRegistry {
    fn default() -> Self {
        let mut reg = Self {
            factories: BTreeMap::new(),
        };
        reg.register("identity", || Box::new(IdentityFeatures));
        reg.register("dense-oh", || Box::new(OrientationHistogram::default()));
        reg
    }
}

impl DescriptorRegistry {
    pub fn register(
        &mut self,
        name: &str,
        factory: impl Fn() -> Box<dyn FeatureExtractor> + Send + Sync + 'static,
    ) {
        self.factories.insert(name.to_string(), Arc::new(factory));
    }

    pub fn names(&self) -> Vec<String> {
        self.factories.keys().cloned().collect()
    }

    pub fn get(&self, name: &str) -> Result<Box<dyn FeatureExtractor>> {
        self.factories
            .get(name)
            .map(|f| f())
            .ok_or_else(|| Error::UnknownDescriptor {
                name: name.to_string(),
                available: self.names(),
            })
    }
}

/// Looks up a built-in descriptor by name.
pub fn descriptor_registry(name: &str) -> Result<Box<dyn FeatureExtractor>> {
    DescriptorRegistry::default().get(name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn textured(w: usize, h: usize, seed: f64) -> Image {
        Image::from_fn(w, h, |x, y| {
            let (x, y) = (x as f64, y as f64);
            (0.31 * x + seed).sin() * (0.17 * y - 0.4 * seed).cos() + 0.05 * (0.9 * x * y / 7.0).sin()
        })
    }

    #[test]
    fn identity_keeps_channels_and_is_idempotent() {
        let gray = Image::new(4, 4, 1, vec![0.5; 16]).unwrap();
        let f = IdentityFeatures.extract(&gray).unwrap();
        assert_eq!(f.channels(), 1);
        assert!(f.data().data().iter().all(|&v| v == 0.5));

        let rgb = Image::new(2, 2, 3, (0..12).map(|i| i as f64).collect()).unwrap();
        let f = IdentityFeatures.extract(&rgb).unwrap();
        assert_eq!(f.channels(), 3);
        assert_eq!(f.data().pixel(1, 0), &[3.0, 4.0, 5.0]);
        let twice = IdentityFeatures.extract(f.data()).unwrap();
        assert_eq!(twice.data(), f.data());
    }

    #[test]
    fn constant_image_has_zero_descriptor() {
        let img = Image::new(20, 20, 1, vec![0.7; 400]).unwrap();
        let f = OrientationHistogram::default().extract(&img).unwrap();
        assert_eq!(f.channels(), 8);
        assert!(f.data().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn vertical_step_votes_horizontal_gradient_bin() {
        // dark left half, bright right half: gradients point along +x (bin 0)
        let img = Image::from_fn(24, 24, |x, _| if x >= 12 { 1.0 } else { 0.0 });
        let f = OrientationHistogram::default().extract(&img).unwrap();
        for y in 4..20 {
            let px = f.data().pixel(12, y);
            assert!((px[0] - 1.0).abs() < 1e-12, "{px:?}");
            assert!(px[1..].iter().all(|&v| v.abs() < 1e-12));
        }
        // the opposite edge polarity lands in bin B/2
        let flipped = Image::from_fn(24, 24, |x, _| if x >= 12 { 0.0 } else { 1.0 });
        let f = OrientationHistogram::default().extract(&flipped).unwrap();
        assert!((f.data().pixel(11, 10)[4] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn quarter_turn_shifts_bins() {
        let img = textured(32, 32, 0.3);
        let oh = OrientationHistogram::default();
        let base = oh.extract(&img).unwrap();
        let rot = oh.extract(&img.rotate90()).unwrap();
        let b = oh.config.bins;
        for y in 5..27 {
            for x in 5..27 {
                let rotated = rot.data().pixel(x, y);
                let original = base.data().pixel(y, 31 - x);
                for k in 0..b {
                    assert!((rotated[(k + b / 4) % b] - original[k]).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn unit_norm_descriptors() {
        let f = OrientationHistogram::default()
            .extract(&textured(30, 25, 1.1))
            .unwrap();
        for px in f.data().data().chunks_exact(8) {
            let n = px.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(n == 0.0 || (n - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn translation_equivariance_on_interior() {
        let big = textured(40, 40, 0.8);
        let shifted = Image::from_fn(40, 40, |x, y| {
            if x >= 3 && y >= 2 {
                big.get(x - 3, y - 2, 0)
            } else {
                0.0
            }
        });
        let oh = OrientationHistogram::default();
        let a = oh.extract(&big).unwrap();
        let b = oh.extract(&shifted).unwrap();
        for y in 12..30 {
            for x in 12..30 {
                let pa = a.data().pixel(x - 3, y - 2);
                let pb = b.data().pixel(x, y);
                for k in 0..8 {
                    assert!((pa[k] - pb[k]).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn invalid_configuration() {
        let small = Image::new(8, 8, 1, vec![0.0; 64]).unwrap();
        assert!(OrientationHistogram::default().extract(&small).is_err());
        assert!(OrientationHistogram::new(OrientationHistogramConfig {
            bins: 1,
            ..Default::default()
        })
        .is_err());
    }

    #[test]
    fn registry_lookup() {
        assert_eq!(descriptor_registry("identity").unwrap().name(), "identity");
        let oh = descriptor_registry("dense-oh").unwrap();
        assert_eq!(oh.output_channels(3), 8);
        match descriptor_registry("sift") {
            Err(Error::UnknownDescriptor { available, .. }) => {
                assert_eq!(available, vec!["dense-oh".to_string(), "identity".to_string()]);
            }
            other => panic!("unexpected {:?}", other.map(|e| e.name().to_string())),
        }
    }

    proptest! {
        #[test]
        fn outputs_are_finite(seed in -5.0f64..5.0, scale in 0.0f64..100.0) {
            let img = Image::from_fn(20, 18, |x, y| scale * ((x as f64 * 0.7 + seed).sin() + (y as f64 * seed).cos()));
            let f = OrientationHistogram::default().extract(&img).unwrap();
            prop_assert!(f.data().is_finite());
            let g = IdentityFeatures.extract(&img).unwrap();
            prop_assert!(g.data().is_finite());
        }
    }
}
