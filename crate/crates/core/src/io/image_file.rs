use std::path::Path;

use image::{DynamicImage, GrayImage, RgbImage};

use crate::error::{Error, Result};
use crate::imaging::Image;

/// Loads an 8-bit PNG or PPM/PGM. Grayscale files give one channel, anything
/// else three (alpha is dropped). Values are scaled to `[0, 1]`.
pub fn read_image(path: &Path) -> Result<Image> {
    let img = image::open(path).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::format("image", format!("{}: {other}", path.display())),
    })?;
    let (width, height) = (img.width() as usize, img.height() as usize);
    let (channels, raw) = match img {
        DynamicImage::ImageLuma8(g) => (1, g.into_raw()),
        DynamicImage::ImageLumaA8(_) | DynamicImage::ImageLuma16(_) | DynamicImage::ImageLumaA16(_) => {
            (1, img.to_luma8().into_raw())
        }
        other => (3, other.to_rgb8().into_raw()),
    };
    let data = raw.into_iter().map(|b| f64::from(b) / 255.0).collect();
    Image::new(width, height, channels, data)
}

/// Writes a 1- or 3-channel image as 8-bit; the format follows the extension.
/// Values are clamped to `[0, 1]`.
pub fn write_image(path: &Path, img: &Image) -> Result<()> {
    let (w, h) = (img.width() as u32, img.height() as u32);
    let bytes: Vec<u8> = img
        .data()
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let dynamic = match img.channels() {
        1 => DynamicImage::ImageLuma8(GrayImage::from_raw(w, h, bytes).expect("buffer size matches")),
        3 => DynamicImage::ImageRgb8(RgbImage::from_raw(w, h, bytes).expect("buffer size matches")),
        c => {
            return Err(Error::invalid(format!(
                "only 1- or 3-channel images can be saved, got {c}"
            )))
        }
    };
    dynamic.save(path).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::format("image", format!("{}: {other}", path.display())),
    })
}
