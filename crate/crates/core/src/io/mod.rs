//! File formats: OBJ and binary PLY meshes, the `morphfit-model/1` model
//! container, iBUG `.pts` landmarks, 8-bit images and camera JSON.

mod container;
mod image_file;
mod mesh;
mod pts;

use std::path::Path;

pub use container::{decode_model, encode_model, read_model, read_shape_model, read_texture_model, write_model, Model, MODEL_FORMAT};
pub use image_file::{read_image, write_image};
pub use mesh::{parse_obj, parse_ply, read_mesh, read_obj, read_ply, write_mesh, write_obj, write_ply};
pub use pts::{parse_pts, read_pts, write_pts};

use crate::camera::CameraParams;
use crate::error::{Error, Result};

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_camera(path: &Path) -> Result<CameraParams> {
    let bytes = read_bytes(path)?;
    let c: CameraParams =
        serde_json::from_slice(&bytes).map_err(|e| Error::format("camera JSON", e.to_string()))?;
    CameraParams::new(c.focal, c.q, c.t, c.principal_point)
}

pub fn write_camera(path: &Path, c: &CameraParams) -> Result<()> {
    let mut text = serde_json::to_string_pretty(c).expect("camera parameters serialize");
    text.push('\n');
    write_bytes(path, text.as_bytes())
}
