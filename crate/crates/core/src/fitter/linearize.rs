use nalgebra::{DMatrix, DVector, Vector2};
use rayon::prelude::*;

use crate::camera::{camera_apply, vertex_warp_jacobian, warp_jacobians_at, warp_vertices, CameraParams, N_CAMERA};
use crate::error::{check_len, Error, Result};
use crate::features::FeatureImage;
use crate::model::{ShapeModel, TextureModel, TriMesh};
use crate::raster::{rasterize, select_by_priority, visibility_from_buffer, ObservationMask};

/// Vertices whose view direction is closer than this (|cos|) to grazing are not sampled.
pub const GRAZING_COS: f64 = 0.1;

/// The shape and texture models used by a fit.
#[derive(Debug, Clone, Copy)]
pub struct Models<'a> {
    pub shape: &'a ShapeModel,
    pub texture: &'a TextureModel,
}

impl<'a> Models<'a> {
    pub fn new(shape: &'a ShapeModel, texture: &'a TextureModel) -> Result<Self> {
        crate::model::ensure_compatible(shape, texture)?;
        Ok(Self { shape, texture })
    }
}

/// Mesh adjacency needed to decide which vertices can be sampled reliably.
#[derive(Debug, Clone)]
pub struct Topology {
    boundary: Vec<bool>,
    neighbours: Vec<Vec<usize>>,
}

impl Topology {
    pub fn new(mesh: &TriMesh) -> Self {
        Self {
            boundary: mesh.boundary_vertices(),
            neighbours: mesh.vertex_neighbours(),
        }
    }
}

/// Vertices that can be sampled stably: z-buffer visible, not near grazing,
/// not on the mesh boundary, with every one-ring neighbour visible too, and
/// with the pixels around the projection (one beyond the bilinear footprint)
/// all covered by the mesh, which keeps samples off the silhouette.
pub fn sampleable_vertices(
    mesh: &TriMesh,
    c: &CameraParams,
    width: usize,
    height: usize,
    topology: &Topology,
) -> ObservationMask {
    let proj = camera_apply(mesh.to_flat().as_slice(), c).expect("mesh vector has 3N entries");
    let buffer = rasterize(&proj.points, &proj.depths, mesh.trilist(), width, height);
    let visible = visibility_from_buffer(&buffer, &proj.points, &proj.depths, mesh.trilist());
    let r = c.rotation();
    let normals = mesh.vertex_normals();
    let candidates: Vec<bool> = (0..mesh.n_vertices())
        .into_par_iter()
        .map(|v| {
            if !visible.get(v) || topology.boundary[v] {
                return false;
            }
            let y = r * mesh.vertices()[v] + c.t;
            let n = r * normals[v];
            let cos = n.dot(&y) / (n.norm() * y.norm()).max(f64::MIN_POSITIVE);
            if cos.abs() < GRAZING_COS {
                return false;
            }
            let u = proj.points[v];
            if !(u.x >= 1.0 && u.y >= 1.0 && u.x < (width - 2) as f64 && u.y < (height - 2) as f64) {
                return false;
            }
            let (x0, y0) = (u.x.floor() as usize, u.y.floor() as usize);
            (y0 - 1..=y0 + 2).all(|py| (x0 - 1..=x0 + 2).all(|px| buffer.triangle(px, py).is_some()))
        })
        .collect();
    let eroded = (0..mesh.n_vertices())
        .map(|v| candidates[v] && topology.neighbours[v].iter().all(|&w| visible.get(w)))
        .collect();
    ObservationMask::new(eroded)
}

/// Active residual set: the first `k` sampleable vertices in `priority` order.
pub fn active_vertices(sampleable: &ObservationMask, k: usize, priority: &[usize]) -> Vec<usize> {
    select_by_priority(sampleable, k, priority).indices()
}

/// Active vertices with their rows of `t̄` and `U_t`, kept across iterations
/// so the rows are only gathered again when the active set changes.
#[derive(Debug, Clone)]
pub struct ActiveRows {
    vertices: Vec<usize>,
    mean: DVector<f64>,
    basis: DMatrix<f64>,
}

impl ActiveRows {
    pub fn new(texture: &TextureModel, vertices: Vec<usize>) -> Self {
        Self {
            mean: texture.mean_rows(&vertices),
            basis: texture.basis_rows(&vertices),
            vertices,
        }
    }

    /// Switches to `vertices`, regathering rows only if the set changed.
    pub fn update(&mut self, texture: &TextureModel, vertices: &[usize]) {
        if self.vertices != vertices {
            *self = Self::new(texture, vertices.to_vec());
        }
    }

    pub fn vertices(&self) -> &[usize] {
        &self.vertices
    }

    /// `t̄` on the active entries.
    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    /// `U_t` rows of the active entries (m×n_t).
    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }
}

/// Everything a Gauss-Newton step needs at the current parameters, restricted
/// to the active vertices `A` (entries `m = |A|·C`).
#[derive(Debug, Clone)]
pub struct Linearization<'a> {
    pub vertices: &'a [usize],
    pub channels: usize,
    /// `F(W(p, c))` on the active entries.
    pub sampled: DVector<f64>,
    /// `t̄` on the active entries.
    pub mean: &'a DVector<f64>,
    /// `U_t` rows of the active entries (m×n_t).
    pub basis: &'a DMatrix<f64>,
    /// Camera columns kept in the Jacobians (indices into `[f, q1, q2, q3, tx, ty, tz]`).
    pub camera_columns: Vec<usize>,
    /// `[J_{F,p}, J_{F,c}]ᵀ`, (n_s + n_c)×m.
    pub jacobian_t: DMatrix<f64>,
    /// `W_l(p, c) − s_l`.
    pub landmark_residual: DVector<f64>,
    /// `[J_{W_l,p}, J_{W_l,c}]`, 2L×(n_s + n_c).
    pub landmark_jacobian: DMatrix<f64>,
}

impl Linearization<'_> {
    pub fn n_shape(&self) -> usize {
        self.jacobian_t.nrows() - self.camera_columns.len()
    }

    pub fn n_params(&self) -> usize {
        self.jacobian_t.nrows()
    }

    /// Expands a reduced camera increment to the full 7-vector.
    pub fn camera_delta(&self, reduced: &[f64]) -> [f64; N_CAMERA] {
        let mut out = [0.0; N_CAMERA];
        for (&col, &d) in self.camera_columns.iter().zip(reduced) {
            out[col] = d;
        }
        out
    }
}

pub fn camera_columns(optimize_focal: bool) -> Vec<usize> {
    if optimize_focal {
        (0..N_CAMERA).collect()
    } else {
        (1..N_CAMERA).collect()
    }
}

/// Samples, gradients and Jacobians at `(p, c)` on the active vertices of `rows`.
pub fn linearize<'a>(
    p: &DVector<f64>,
    c: &CameraParams,
    rows: &'a ActiveRows,
    features: &FeatureImage,
    landmarks: &[Vector2<f64>],
    models: &Models<'_>,
    optimize_focal: bool,
) -> Result<Linearization<'a>> {
    let vertices = rows.vertices();
    let shape = models.shape;
    let ch = models.texture.channels();
    if features.channels() != ch {
        return Err(Error::DimensionMismatch {
            context: "feature channels",
            expected: ch,
            got: features.channels(),
        });
    }
    check_len("landmarks", shape.landmark_ids().len(), landmarks.len())?;
    let needed: Vec<usize> = vertices.iter().chain(shape.landmark_ids()).copied().collect();
    let instance = shape.instance_at(p, &needed)?;
    let cam_cols = camera_columns(optimize_focal);
    let n_s = shape.n_components();
    let n = n_s + cam_cols.len();

    let r = c.rotation();
    let (points, _) = warp_vertices(instance.as_slice(), vertices, c);
    let m = vertices.len() * ch;
    let mut sampled = DVector::zeros(m);
    let mut jacobian_t = DMatrix::zeros(n, m);
    sampled
        .as_mut_slice()
        .par_chunks_mut(ch)
        .zip(jacobian_t.as_mut_slice().par_chunks_mut(n * ch))
        .enumerate()
        .try_for_each_init(
            || (vec![0.0; 2 * n_s], vec![0.0; ch], vec![0.0; ch]),
            |(d_shape, gx, gy), (k, (values, cols))| -> Result<()> {
                let d_cam = vertex_warp_jacobian(instance.as_slice(), c, &r, shape, vertices[k], d_shape)?;
                let q = points[k];
                features.data().sample_zero_extended(q.x, q.y, values);
                features.grad_x().sample_zero_extended(q.x, q.y, gx);
                features.grad_y().sample_zero_extended(q.x, q.y, gy);
                let (du, dv) = d_shape.split_at(n_s);
                for c_i in 0..ch {
                    let (a, b) = (gx[c_i], gy[c_i]);
                    let col = &mut cols[c_i * n..(c_i + 1) * n];
                    for ((o, &x), &y) in col[..n_s].iter_mut().zip(du).zip(dv) {
                        *o = a * x + b * y;
                    }
                    for (o, &cc) in col[n_s..].iter_mut().zip(&cam_cols) {
                        *o = a * d_cam[0][cc] + b * d_cam[1][cc];
                    }
                }
                Ok(())
            },
        )?;

    let (landmark_residual, landmark_jacobian) =
        landmark_terms(instance.as_slice(), c, landmarks, shape, &cam_cols)?;
    Ok(Linearization {
        vertices,
        channels: ch,
        sampled,
        mean: rows.mean(),
        basis: rows.basis(),
        camera_columns: cam_cols,
        jacobian_t,
        landmark_residual,
        landmark_jacobian,
    })
}

/// Landmark residual `W_l(p, c) − s_l` and its Jacobian over `[p, c_cols]`.
pub(crate) fn landmark_terms(
    instance: &[f64],
    c: &CameraParams,
    landmarks: &[Vector2<f64>],
    shape: &ShapeModel,
    cam_cols: &[usize],
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let ids = shape.landmark_ids();
    let jl = warp_jacobians_at(instance, c, shape, ids)?;
    let (pts, _) = warp_vertices(instance, ids, c);
    let residual = DVector::from_iterator(
        2 * ids.len(),
        pts.iter()
            .zip(landmarks)
            .flat_map(|(a, b)| [a.x - b.x, a.y - b.y]),
    );
    let n_s = shape.n_components();
    let mut jac = DMatrix::zeros(2 * ids.len(), n_s + cam_cols.len());
    jac.columns_mut(0, n_s).copy_from(&jl.d_shape);
    for (j, &cc) in cam_cols.iter().enumerate() {
        jac.set_column(n_s + j, &jl.d_camera.column(cc));
    }
    Ok((residual, jac))
}

/// Landmark residual only; landmarks behind the camera give NaN entries.
pub(crate) fn landmark_residual(
    instance: &[f64],
    c: &CameraParams,
    landmarks: &[Vector2<f64>],
    shape: &ShapeModel,
) -> DVector<f64> {
    let (pts, _) = warp_vertices(instance, shape.landmark_ids(), c);
    DVector::from_iterator(
        2 * pts.len(),
        pts.iter()
            .zip(landmarks)
            .flat_map(|(a, b)| [a.x - b.x, a.y - b.y]),
    )
}

/// `F(W(p, c))` on the active entries, zero-extended outside the image.
pub(crate) fn sample_active(
    instance: &[f64],
    c: &CameraParams,
    vertices: &[usize],
    features: &FeatureImage,
) -> DVector<f64> {
    let ch = features.channels();
    let (points, depths) = warp_vertices(instance, vertices, c);
    let mut out = DVector::zeros(vertices.len() * ch);
    out.as_mut_slice()
        .par_chunks_mut(ch)
        .enumerate()
        .for_each(|(k, values)| {
            if depths[k] > crate::camera::EPS_NEAR {
                features
                    .data()
                    .sample_zero_extended(points[k].x, points[k].y, values);
            }
        });
    out
}
