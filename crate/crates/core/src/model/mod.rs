//! Shape and texture statistics: meshes, PCA models and Procrustes alignment.

mod mesh;
mod pca;
mod procrustes;
mod shape;

pub use mesh::TriMesh;
pub use pca::{orthonormality_error, pca_from_samples, PcaModel, ORTHONORMALITY_TOL};
pub use procrustes::{
    generalized_procrustes, procrustes_align, ProcrustesResult, GPA_MAX_ITERS, GPA_TOLERANCE,
};
pub use shape::{ShapeModel, TextureModel};
pub(crate) use shape::ensure_compatible;
