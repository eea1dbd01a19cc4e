//! Dense multi-channel raster images with bilinear sampling.

use crate::error::{check_len, Error, Result};

/// `H×W×C` real image, row-major with interleaved channels: `(y·W + x)·C + ch`.
///
/// Pixel `(x, y)` has its centre at continuous coordinate `(x, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || channels == 0 {
            return Err(Error::invalid(format!(
                "image dimensions must be positive, got {width}×{height}×{channels}"
            )));
        }
        check_len("image data", width * height * channels, data.len())?;
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize, channels: usize) -> Self {
        Self {
            width,
            height,
            channels,
            data: vec![0.0; width * height * channels],
        }
    }

    /// Builds a single-channel image from `f(x, y)`.
    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let data = (0..height)
            .flat_map(|y| (0..width).map(move |x| (x, y)))
            .map(|(x, y)| f(x, y))
            .collect();
        Self {
            width,
            height,
            channels: 1,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, ch: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + ch]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, ch: usize, value: f64) {
        self.data[(y * self.width + x) * self.channels + ch] = value;
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[f64] {
        let start = (y * self.width + x) * self.channels;
        &self.data[start..start + self.channels]
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= 0.0 && y >= 0.0 && x <= (self.width - 1) as f64 && y <= (self.height - 1) as f64
    }

    /// Bilinear interpolation of every channel at `(x, y)`; `false` outside the image.
    pub fn sample_bilinear(&self, x: f64, y: f64, out: &mut [f64]) -> bool {
        if !self.contains(x, y) {
            return false;
        }
        let x0 = (x.floor() as usize).min(self.width.saturating_sub(2));
        let y0 = (y.floor() as usize).min(self.height.saturating_sub(2));
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let c = self.channels;
        let (i00, i10) = ((y0 * self.width + x0) * c, (y0 * self.width + x1) * c);
        let (i01, i11) = ((y1 * self.width + x0) * c, (y1 * self.width + x1) * c);
        for (ch, o) in out.iter_mut().enumerate().take(c) {
            let top = self.data[i00 + ch] * (1.0 - fx) + self.data[i10 + ch] * fx;
            let bottom = self.data[i01 + ch] * (1.0 - fx) + self.data[i11 + ch] * fx;
            *o = top * (1.0 - fy) + bottom * fy;
        }
        true
    }

    /// Bilinear sampling of an image extended by zeros outside its support.
    pub fn sample_zero_extended(&self, x: f64, y: f64, out: &mut [f64]) {
        if self.sample_bilinear(x, y, out) {
            return;
        }
        out.iter_mut().for_each(|o| *o = 0.0);
        if !(x.is_finite() && y.is_finite()) {
            return;
        }
        let (xf, yf) = (x.floor(), y.floor());
        let (fx, fy) = (x - xf, y - yf);
        let c = self.channels;
        for (dx, wx) in [(0.0, 1.0 - fx), (1.0, fx)] {
            for (dy, wy) in [(0.0, 1.0 - fy), (1.0, fy)] {
                let (px, py) = (xf + dx, yf + dy);
                if px < 0.0 || py < 0.0 || px >= self.width as f64 || py >= self.height as f64 {
                    continue;
                }
                let base = (py as usize * self.width + px as usize) * c;
                for (ch, o) in out.iter_mut().enumerate().take(c) {
                    *o += wx * wy * self.data[base + ch];
                }
            }
        }
    }

    /// Channel average.
    pub fn to_gray(&self) -> Image {
        if self.channels == 1 {
            return self.clone();
        }
        let c = self.channels as f64;
        let data = self
            .data
            .chunks_exact(self.channels)
            .map(|px| px.iter().sum::<f64>() / c)
            .collect();
        Image {
            width: self.width,
            height: self.height,
            channels: 1,
            data,
        }
    }

    /// Central-difference gradients per channel with replicated borders: `(∂/∂x, ∂/∂y)`.
    pub fn gradients(&self) -> (Image, Image) {
        let (w, h, c) = (self.width, self.height, self.channels);
        let mut gx = Image::zeros(w, h, c);
        let mut gy = Image::zeros(w, h, c);
        for y in 0..h {
            let (ym, yp) = (y.saturating_sub(1), (y + 1).min(h - 1));
            for x in 0..w {
                let (xm, xp) = (x.saturating_sub(1), (x + 1).min(w - 1));
                for ch in 0..c {
                    gx.set(x, y, ch, 0.5 * (self.get(xp, y, ch) - self.get(xm, y, ch)));
                    gy.set(x, y, ch, 0.5 * (self.get(x, yp, ch) - self.get(x, ym, ch)));
                }
            }
        }
        (gx, gy)
    }

    /// Rotates the content by a quarter turn: `out(x, y) = self(y, H − 1 − x)`.
    pub fn rotate90(&self) -> Image {
        let (w, h, c) = (self.width, self.height, self.channels);
        let mut out = Image::zeros(h, w, c);
        for y in 0..w {
            for x in 0..h {
                for ch in 0..c {
                    out.set(x, y, ch, self.get(y, h - 1 - x, ch));
                }
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bilinear_is_exact_on_affine_images() {
        let img = Image::from_fn(16, 12, |x, y| 0.3 * x as f64 - 1.7 * y as f64 + 2.0);
        let mut out = [0.0];
        for &(x, y) in &[(10.5, 3.25), (0.0, 0.0), (15.0, 11.0), (7.9, 10.01)] {
            assert!(img.sample_bilinear(x, y, &mut out));
            assert!((out[0] - (0.3 * x - 1.7 * y + 2.0)).abs() < 1e-12);
        }
        assert!(!img.sample_bilinear(-0.1, 3.0, &mut out));
        assert!(!img.sample_bilinear(15.01, 3.0, &mut out));
    }

    #[test]
    fn ramp_samples_its_coordinate() {
        let img = Image::from_fn(32, 32, |x, _| x as f64);
        let mut out = [0.0];
        assert!(img.sample_bilinear(10.5, 4.0, &mut out));
        assert_eq!(out[0], 10.5);
    }

    #[test]
    fn gradient_of_ramp_and_square() {
        let ramp = Image::from_fn(10, 8, |x, _| 3.0 * x as f64);
        let (gx, gy) = ramp.gradients();
        for y in 0..8 {
            for x in 1..9 {
                assert_eq!(gx.get(x, y, 0), 3.0);
                assert_eq!(gy.get(x, y, 0), 0.0);
            }
        }
        let sq = Image::from_fn(10, 3, |x, _| (x * x) as f64);
        let (gx, _) = sq.gradients();
        for k in 1..9 {
            assert_eq!(gx.get(k, 1, 0), 2.0 * k as f64);
        }
        // replicated border: one-sided half difference
        assert_eq!(gx.get(0, 0, 0), 0.5);
    }

    #[test]
    fn zero_extension_blends_with_background() {
        let img = Image::from_fn(4, 4, |_, _| 1.0);
        let mut out = [0.0];
        img.sample_zero_extended(-0.5, 1.0, &mut out);
        assert!((out[0] - 0.5).abs() < 1e-12);
        img.sample_zero_extended(-5.0, -5.0, &mut out);
        assert_eq!(out[0], 0.0);
    }

    #[test]
    fn rotate_four_times_is_identity() {
        let img = Image::from_fn(5, 3, |x, y| (x * 7 + y) as f64);
        let back = img.rotate90().rotate90().rotate90().rotate90();
        assert_eq!(img, back);
        assert_eq!(img.rotate90().width(), 3);
    }
}
