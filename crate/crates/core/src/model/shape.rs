use nalgebra::{DMatrix, DVector};

use super::mesh::{validate_trilist, TriMesh};
use super::pca::PcaModel;
use crate::error::{check_len, Error, Result};

/// PCA shape model over `3N`-dimensional vertex vectors sharing one triangulation.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeModel {
    pca: PcaModel,
    /// `U_sᵀ` (n_s×3N), so the columns of one vertex are contiguous.
    basis_t: DMatrix<f64>,
    trilist: Vec<[usize; 3]>,
    landmark_ids: Vec<usize>,
}

impl ShapeModel {
    pub fn new(pca: PcaModel, trilist: Vec<[usize; 3]>, landmark_ids: Vec<usize>) -> Result<Self> {
        if pca.dim() % 3 != 0 {
            return Err(Error::invalid(format!(
                "shape model dimension {} is not a multiple of 3",
                pca.dim()
            )));
        }
        let n = pca.dim() / 3;
        validate_trilist(&trilist, n)?;
        let mut seen = vec![false; n];
        for &id in &landmark_ids {
            if id >= n {
                return Err(Error::invalid(format!(
                    "landmark vertex {id} out of range for {n} vertices"
                )));
            }
            if std::mem::replace(&mut seen[id], true) {
                return Err(Error::invalid(format!("landmark vertex {id} listed twice")));
            }
        }
        Ok(Self {
            basis_t: pca.basis().transpose(),
            pca,
            trilist,
            landmark_ids,
        })
    }

    pub fn pca(&self) -> &PcaModel {
        &self.pca
    }

    pub fn n_vertices(&self) -> usize {
        self.pca.dim() / 3
    }

    pub fn n_components(&self) -> usize {
        self.pca.n_components()
    }

    pub fn trilist(&self) -> &[[usize; 3]] {
        &self.trilist
    }

    pub fn landmark_ids(&self) -> &[usize] {
        &self.landmark_ids
    }

    pub fn mean_mesh(&self) -> TriMesh {
        TriMesh::from_flat(self.pca.mean().as_slice(), self.trilist.clone())
            .expect("validated at construction")
    }

    /// Flat `3N` instance vector `s̄ + U_s p`.
    pub fn instance_flat(&self, p: &DVector<f64>) -> Result<DVector<f64>> {
        self.pca.instance(p)
    }

    /// Flat `3N` vector that equals `s̄ + U_s p` on `vertices` (repeats allowed) and `s̄` elsewhere.
    /// Costs `O(|vertices|·n_s)` beyond copying the mean.
    pub fn instance_at(&self, p: &DVector<f64>, vertices: &[usize]) -> Result<DVector<f64>> {
        crate::error::check_len("shape parameters", self.n_components(), p.len())?;
        let mean = self.pca.mean();
        let mut out = mean.clone();
        let p = p.as_slice();
        for &v in vertices {
            for i in 3 * v..3 * v + 3 {
                out[i] = mean[i] + dot(self.basis_row(i), p);
            }
        }
        Ok(out)
    }

    /// Mesh instance for shape parameters `p`.
    pub fn shape_instance(&self, p: &DVector<f64>) -> Result<TriMesh> {
        let flat = self.pca.instance(p)?;
        TriMesh::from_flat(flat.as_slice(), self.trilist.clone())
    }

    /// Rows `3v..3v+3` of the basis.
    pub fn vertex_basis(&self, v: usize) -> nalgebra::DMatrixView<'_, f64> {
        self.pca.basis().rows(3 * v, 3)
    }

    /// Row `i` of the basis as a contiguous slice of `n_s` entries.
    pub fn basis_row(&self, i: usize) -> &[f64] {
        let n_s = self.n_components();
        &self.basis_t.as_slice()[i * n_s..(i + 1) * n_s]
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// PCA texture model over `C·N`-dimensional per-vertex feature vectors.
///
/// Entries are laid out vertex by vertex with the `C` channels of a vertex
/// contiguous: index `v·C + ch`.
#[derive(Debug, Clone, PartialEq)]
pub struct TextureModel {
    pca: PcaModel,
    channels: usize,
}

impl TextureModel {
    pub fn new(pca: PcaModel, channels: usize) -> Result<Self> {
        if channels == 0 {
            return Err(Error::invalid("texture model needs at least one channel"));
        }
        if pca.dim() % channels != 0 {
            return Err(Error::invalid(format!(
                "texture dimension {} not divisible by {channels} channels",
                pca.dim()
            )));
        }
        Ok(Self { pca, channels })
    }

    pub fn pca(&self) -> &PcaModel {
        &self.pca
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn n_vertices(&self) -> usize {
        self.pca.dim() / self.channels
    }

    pub fn n_components(&self) -> usize {
        self.pca.n_components()
    }

    /// `t̄ + U_t λ`.
    pub fn texture_instance(&self, lambda: &DVector<f64>) -> Result<DVector<f64>> {
        self.pca.instance(lambda)
    }

    /// Rows of the basis belonging to the given vertices, in the given order.
    pub fn basis_rows(&self, vertices: &[usize]) -> DMatrix<f64> {
        let c = self.channels;
        let basis = self.pca.basis();
        DMatrix::from_fn(vertices.len() * c, basis.ncols(), |r, k| {
            basis[(vertices[r / c] * c + r % c, k)]
        })
    }

    pub fn mean_rows(&self, vertices: &[usize]) -> DVector<f64> {
        let c = self.channels;
        let mean = self.pca.mean();
        DVector::from_fn(vertices.len() * c, |r, _| mean[vertices[r / c] * c + r % c])
    }
}

pub(crate) fn ensure_compatible(shape: &ShapeModel, texture: &TextureModel) -> Result<()> {
    check_len(
        "texture model vertex count",
        shape.n_vertices(),
        texture.n_vertices(),
    )
}
