//! Model container: an 8-byte little-endian header length, a JSON header,
//! then little-endian `f64` arrays in the order the header lists them.
//! Matrices are stored column by column.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{read_bytes, write_bytes};
use crate::error::{Error, Result};
use crate::model::{PcaModel, ShapeModel, TextureModel};

pub const MODEL_FORMAT: &str = "morphfit-model/1";

/// A shape or texture model as stored in one container file.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Shape(ShapeModel),
    Texture(TextureModel),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Kind {
    Shape,
    Texture,
}

#[derive(Debug, Serialize, Deserialize)]
struct ArraySpec {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    kind: Kind,
    dim: usize,
    n_components: usize,
    n_vertices: usize,
    channels: usize,
    #[serde(default)]
    landmark_ids: Vec<usize>,
    #[serde(default)]
    trilist: Vec<[usize; 3]>,
    arrays: Vec<ArraySpec>,
}

fn bad(message: impl Into<String>) -> Error {
    Error::format(MODEL_FORMAT, message)
}

pub fn encode_model(model: &Model) -> Vec<u8> {
    let (kind, pca, channels, landmark_ids, trilist) = match model {
        Model::Shape(s) => (Kind::Shape, s.pca(), 3, s.landmark_ids().to_vec(), s.trilist().to_vec()),
        Model::Texture(t) => (Kind::Texture, t.pca(), t.channels(), Vec::new(), Vec::new()),
    };
    let (d, n) = (pca.dim(), pca.n_components());
    let header = Header {
        format: MODEL_FORMAT.to_string(),
        kind,
        dim: d,
        n_components: n,
        n_vertices: d / channels,
        channels,
        landmark_ids,
        trilist,
        arrays: vec![
            ArraySpec { name: "mean".into(), shape: vec![d] },
            ArraySpec { name: "basis".into(), shape: vec![d, n] },
            ArraySpec { name: "eigenvalues".into(), shape: vec![n] },
        ],
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(8 + json.len() + 8 * (d * (n + 1) + n));
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for x in pca.mean().iter().chain(pca.basis().iter()).chain(pca.eigenvalues().iter()) {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

pub fn decode_model(bytes: &[u8]) -> Result<Model> {
    let len_bytes: [u8; 8] = bytes
        .get(..8)
        .ok_or_else(|| bad("file shorter than the header length field"))?
        .try_into()
        .expect("slice of length 8");
    let header_len = usize::try_from(u64::from_le_bytes(len_bytes)).map_err(|_| bad("header length overflows"))?;
    let json = bytes
        .get(8..8usize.saturating_add(header_len))
        .ok_or_else(|| bad(format!("header of {header_len} bytes runs past the end of the file")))?;
    let header: Header = serde_json::from_slice(json).map_err(|e| bad(format!("header: {e}")))?;
    if header.format != MODEL_FORMAT {
        return Err(bad(format!("unsupported format '{}'", header.format)));
    }
    if header.channels == 0 || header.n_vertices.checked_mul(header.channels) != Some(header.dim) {
        return Err(bad(format!(
            "dim {} is not n_vertices {} × channels {}",
            header.dim, header.n_vertices, header.channels
        )));
    }
    if header.kind == Kind::Shape && header.channels != 3 {
        return Err(bad("shape models have 3 coordinates per vertex"));
    }

    let mut data = &bytes[8 + header_len..];
    let (d, n) = (header.dim, header.n_components);
    let mut mean = None;
    let mut basis = None;
    let mut eigenvalues = None;
    for spec in &header.arrays {
        let count = spec.shape.iter().try_fold(1usize, |a, &b| a.checked_mul(b));
        let count = count.ok_or_else(|| bad(format!("array '{}' is too large", spec.name)))?;
        let nbytes = count.checked_mul(8).ok_or_else(|| bad("array size overflows"))?;
        if data.len() < nbytes {
            return Err(bad(format!("array '{}' runs past the end of the file", spec.name)));
        }
        let (chunk, rest) = data.split_at(nbytes);
        data = rest;
        let values: Vec<f64> = chunk
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("chunk of 8")))
            .collect();
        let expect_shape = |want: &[usize]| {
            if spec.shape == want {
                Ok(())
            } else {
                Err(bad(format!("array '{}' has shape {:?}, expected {want:?}", spec.name, spec.shape)))
            }
        };
        match spec.name.as_str() {
            "mean" => {
                expect_shape(&[d])?;
                mean = Some(DVector::from_vec(values));
            }
            "basis" => {
                expect_shape(&[d, n])?;
                basis = Some(DMatrix::from_vec(d, n, values));
            }
            "eigenvalues" => {
                expect_shape(&[n])?;
                eigenvalues = Some(DVector::from_vec(values));
            }
            other => return Err(bad(format!("unknown array '{other}'"))),
        }
    }
    if !data.is_empty() {
        return Err(bad(format!("{} trailing bytes after the arrays", data.len())));
    }
    let missing = |name: &str| bad(format!("array '{name}' missing"));
    let pca = PcaModel::new(
        mean.ok_or_else(|| missing("mean"))?,
        basis.ok_or_else(|| missing("basis"))?,
        eigenvalues.ok_or_else(|| missing("eigenvalues"))?,
    )?;
    Ok(match header.kind {
        Kind::Shape => Model::Shape(ShapeModel::new(pca, header.trilist, header.landmark_ids)?),
        Kind::Texture => Model::Texture(TextureModel::new(pca, header.channels)?),
    })
}

pub fn write_model(path: &Path, model: &Model) -> Result<()> {
    write_bytes(path, &encode_model(model))
}

pub fn read_model(path: &Path) -> Result<Model> {
    decode_model(&read_bytes(path)?).map_err(|e| match e {
        Error::Format { format, message } => Error::format(format, format!("{}: {message}", path.display())),
        other => other,
    })
}

pub fn read_shape_model(path: &Path) -> Result<ShapeModel> {
    match read_model(path)? {
        Model::Shape(s) => Ok(s),
        Model::Texture(_) => Err(Error::invalid(format!(
            "{}: expected a shape model, found a texture model",
            path.display()
        ))),
    }
}

pub fn read_texture_model(path: &Path) -> Result<TextureModel> {
    match read_model(path)? {
        Model::Texture(t) => Ok(t),
        Model::Shape(_) => Err(Error::invalid(format!(
            "{}: expected a texture model, found a shape model",
            path.display()
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::make_synthetic_model;

    #[test]
    fn shape_and_texture_round_trip_bit_exactly() {
        let (shape, texture) = make_synthetic_model(5, 150, 4, 3, 2).unwrap();
        for model in [Model::Shape(shape), Model::Texture(texture)] {
            let bytes = encode_model(&model);
            assert_eq!(decode_model(&bytes).unwrap(), model);
            assert_eq!(encode_model(&decode_model(&bytes).unwrap()), bytes);
        }
    }

    #[test]
    fn header_declares_format_and_arrays() {
        let (shape, _) = make_synthetic_model(5, 150, 4, 3, 2).unwrap();
        let bytes = encode_model(&Model::Shape(shape));
        let len = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
        let header: serde_json::Value = serde_json::from_slice(&bytes[8..8 + len]).unwrap();
        assert_eq!(header["format"], MODEL_FORMAT);
        assert_eq!(header["arrays"][1]["name"], "basis");
    }

    #[test]
    fn truncated_and_tampered_files_are_rejected() {
        let (_, texture) = make_synthetic_model(5, 150, 4, 3, 2).unwrap();
        let bytes = encode_model(&Model::Texture(texture));
        assert!(matches!(decode_model(&bytes[..bytes.len() - 1]), Err(Error::Format { .. })));
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode_model(&extra).is_err());
        let at = bytes.windows(MODEL_FORMAT.len()).position(|w| w == MODEL_FORMAT.as_bytes()).unwrap();
        let mut other = bytes.clone();
        other[at + MODEL_FORMAT.len() - 1] = b'9';
        assert!(matches!(decode_model(&other), Err(Error::Format { .. })));
        assert!(decode_model(&[1, 2, 3]).is_err());
    }

    #[test]
    fn kind_is_checked_on_typed_read() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.mfm");
        let (_, texture) = make_synthetic_model(5, 150, 4, 3, 2).unwrap();
        write_model(&path, &Model::Texture(texture.clone())).unwrap();
        assert_eq!(read_texture_model(&path).unwrap(), texture);
        assert!(matches!(read_shape_model(&path), Err(Error::InvalidArgument(_))));
    }
}
