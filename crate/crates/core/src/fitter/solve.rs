use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use super::config::{ProjectOutSolve, Weights};
use super::linearize::{landmark_residual, sample_active, Linearization, Models};
use crate::camera::{CameraParams, N_CAMERA};
use crate::error::{Error, Result};
use crate::features::FeatureImage;
use crate::model::TextureModel;

/// Terms of the overall cost.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CostTerms {
    pub data: f64,
    pub landmark: f64,
    pub shape_prior: f64,
    pub texture_prior: f64,
    pub total: f64,
}

impl CostTerms {
    pub fn new(data: f64, landmark: f64, shape_prior: f64, texture_prior: f64) -> Self {
        Self {
            data,
            landmark,
            shape_prior,
            texture_prior,
            total: data + landmark + shape_prior + texture_prior,
        }
    }
}

/// Parameter increments of one Gauss-Newton step.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub dp: DVector<f64>,
    /// `[Δf, Δq1, Δq2, Δq3, Δtx, Δty, Δtz]`; `Δf = 0` when the focal length is frozen.
    pub dc: [f64; N_CAMERA],
    /// Empty for project-out.
    pub dlambda: DVector<f64>,
}

impl Step {
    pub fn dp_norm(&self) -> f64 {
        self.dp.norm()
    }

    pub fn dc_norm(&self) -> f64 {
        self.dc.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn norm(&self) -> f64 {
        (self.dp.norm_squared() + self.dc.iter().map(|x| x * x).sum::<f64>() + self.dlambda.norm_squared())
            .sqrt()
    }

    pub fn scaled(&self, alpha: f64) -> Step {
        Step {
            dp: &self.dp * alpha,
            dc: self.dc.map(|x| x * alpha),
            dlambda: &self.dlambda * alpha,
        }
    }
}

/// `‖p‖²_{Σ⁻¹}`.
pub(crate) fn mahalanobis2(x: &DVector<f64>, eigenvalues: &DVector<f64>) -> f64 {
    x.iter().zip(eigenvalues.iter()).map(|(a, e)| a * a / e).sum()
}

/// Cholesky solve of `H x = b`, retried once with a 1e-10 relative diagonal jitter.
pub(crate) fn solve_spd(h: DMatrix<f64>, b: &DVector<f64>, context: &'static str) -> Result<DVector<f64>> {
    if !h.iter().all(|v| v.is_finite()) || !b.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite(format!("{context} normal equations")));
    }
    if let Some(ch) = Cholesky::new(h.clone()) {
        return Ok(ch.solve(b));
    }
    let scale = h.diagonal().amax().max(1.0);
    let mut h = h;
    for i in 0..h.nrows() {
        h[(i, i)] += 1e-10 * scale;
    }
    Cholesky::new(h)
        .map(|ch| ch.solve(b))
        .ok_or(Error::Singular(context))
}

/// Gram matrix `U_Aᵀ U_A` of the active texture rows, updated incrementally
/// when the active vertex set changes by a little between iterations.
#[derive(Debug, Clone)]
pub struct ProjectorCache {
    active: Vec<bool>,
    count: usize,
    gram: Option<DMatrix<f64>>,
    incremental_updates: usize,
}

const MAX_INCREMENTAL_UPDATES: usize = 32;

impl ProjectorCache {
    pub fn new(n_vertices: usize) -> Self {
        Self {
            active: vec![false; n_vertices],
            count: 0,
            gram: None,
            incremental_updates: 0,
        }
    }

    /// Factorised Gram matrix for the active set of `lin`.
    pub fn factor(&mut self, lin: &Linearization, texture: &TextureModel) -> Result<Cholesky<f64, Dyn>> {
        let n = self.active.len();
        let mut next = vec![false; n];
        for &v in lin.vertices {
            next[v] = true;
        }
        let changed: Vec<usize> = (0..n).filter(|&v| next[v] != self.active[v]).collect();
        let gram = match self.gram.take() {
            Some(mut g)
                if changed.len() * 2 <= lin.vertices.len()
                    && self.incremental_updates < MAX_INCREMENTAL_UPDATES =>
            {
                if !changed.is_empty() {
                    let rows = texture.basis_rows(&changed);
                    let ch = texture.channels();
                    for (k, &v) in changed.iter().enumerate() {
                        let block = rows.rows(k * ch, ch);
                        let outer = block.transpose() * block;
                        if next[v] {
                            g += outer;
                        } else {
                            g -= outer;
                        }
                    }
                    self.incremental_updates += 1;
                }
                g
            }
            _ => {
                self.incremental_updates = 0;
                lin.basis.transpose() * lin.basis
            }
        };
        self.count = lin.vertices.len();
        self.active = next;
        let factor = Cholesky::new(gram.clone()).ok_or(Error::Singular(
            "texture basis restricted to the active vertices",
        ));
        self.gram = Some(gram);
        factor
    }
}

fn prior_diagonal(h: &mut DMatrix<f64>, g: &mut DVector<f64>, offset: usize, x: &DVector<f64>, eig: &DVector<f64>, w: f64) {
    if w == 0.0 {
        return;
    }
    for i in 0..x.len() {
        h[(offset + i, offset + i)] += w / eig[i];
        g[offset + i] += w * x[i] / eig[i];
    }
}

/// Simultaneous Gauss-Newton increments over `(p, c, λ)`.
pub fn simultaneous_delta(
    lin: &Linearization,
    p: &DVector<f64>,
    lambda: &DVector<f64>,
    models: &Models<'_>,
    weights: &Weights,
) -> Result<Step> {
    let n = lin.n_params();
    let n_s = lin.n_shape();
    let n_t = lin.basis.ncols();
    let m = lin.sampled.len();
    let mut jt = DMatrix::zeros(n + n_t, m);
    jt.rows_mut(0, n).copy_from(&lin.jacobian_t);
    jt.rows_mut(n, n_t).copy_from(&(-lin.basis.transpose()));
    let e = &lin.sampled - lin.mean - lin.basis * lambda;

    let mut h = &jt * jt.transpose();
    let mut g = &jt * &e;
    if weights.landmark > 0.0 {
        let jl = &lin.landmark_jacobian;
        let mut hl = h.view_mut((0, 0), (n, n));
        hl += jl.transpose() * jl * weights.landmark;
        let mut gl = g.rows_mut(0, n);
        gl += jl.transpose() * &lin.landmark_residual * weights.landmark;
    }
    prior_diagonal(&mut h, &mut g, 0, p, models.shape.pca().eigenvalues(), weights.shape_prior);
    prior_diagonal(&mut h, &mut g, n, lambda, models.texture.pca().eigenvalues(), weights.texture_prior);
    let delta = -solve_spd(h, &g, "simultaneous Gauss-Newton step")?;
    Ok(Step {
        dp: delta.rows(0, n_s).into_owned(),
        dc: lin.camera_delta(delta.rows(n_s, n - n_s).as_slice()),
        dlambda: delta.rows(n, n_t).into_owned(),
    })
}

/// Project-out Gauss-Newton increments over `(p, c)`, given the Cholesky
/// factor of `U_Aᵀ U_A`. The projector is applied in factored form, never as
/// an m×m matrix.
pub fn project_out_delta(
    lin: &Linearization,
    gram: &Cholesky<f64, Dyn>,
    p: &DVector<f64>,
    models: &Models<'_>,
    weights: &Weights,
    solve: ProjectOutSolve,
) -> Result<Step> {
    let n = lin.n_params();
    let n_s = lin.n_shape();
    let e = &lin.sampled - lin.mean;
    // Jᵀ U (n×n_t) and Uᵀ e (n_t), then the n_t-dimensional correction
    let jt_u = &lin.jacobian_t * lin.basis;
    let ut_e = lin.basis.tr_mul(&e);
    let g_inv_ut_e = gram.solve(&ut_e);
    let g_inv_ut_j = gram.solve(&jt_u.transpose());

    let mut h = &lin.jacobian_t * lin.jacobian_t.transpose() - &jt_u * g_inv_ut_j;
    let mut g = &lin.jacobian_t * &e - &jt_u * g_inv_ut_e;
    if weights.landmark > 0.0 {
        let jl = &lin.landmark_jacobian;
        h += jl.transpose() * jl * weights.landmark;
        g += jl.transpose() * &lin.landmark_residual * weights.landmark;
    }
    prior_diagonal(&mut h, &mut g, 0, p, models.shape.pca().eigenvalues(), weights.shape_prior);

    let delta = match solve {
        ProjectOutSolve::Joint => -solve_spd(h, &g, "project-out Gauss-Newton step")?,
        ProjectOutSolve::Decoupled => {
            let nc = n - n_s;
            let dp = -solve_spd(
                h.view((0, 0), (n_s, n_s)).into_owned(),
                &g.rows(0, n_s).into_owned(),
                "project-out shape step",
            )?;
            let dc = -solve_spd(
                h.view((n_s, n_s), (nc, nc)).into_owned(),
                &g.rows(n_s, nc).into_owned(),
                "project-out camera step",
            )?;
            let mut d = DVector::zeros(n);
            d.rows_mut(0, n_s).copy_from(&dp);
            d.rows_mut(n_s, nc).copy_from(&dc);
            d
        }
    };
    Ok(Step {
        dp: delta.rows(0, n_s).into_owned(),
        dc: lin.camera_delta(delta.rows(n_s, n - n_s).as_slice()),
        dlambda: DVector::zeros(0),
    })
}

/// `‖(I − U (UᵀU)⁻¹ Uᵀ) e‖²`.
pub(crate) fn projected_norm2(e: &DVector<f64>, basis: &DMatrix<f64>, gram: &Cholesky<f64, Dyn>) -> f64 {
    let a = basis.tr_mul(e);
    let b = gram.solve(&a);
    (e.norm_squared() - a.dot(&b)).max(0.0)
}

/// Which data term a cost evaluation uses.
#[derive(Debug, Clone, Copy)]
pub(crate) enum DataTerm<'a> {
    /// `‖F − t̄ − Uλ‖²` with the texture prior.
    Texture(&'a DVector<f64>),
    /// `‖P(F − t̄)‖²`, texture prior absent.
    ProjectedOut(&'a Cholesky<f64, Dyn>),
}

/// Cost on a fixed active set with `F` zero-extended outside the image.
#[allow(clippy::too_many_arguments)]
pub(crate) fn cost_on_active(
    p: &DVector<f64>,
    c: &CameraParams,
    data: DataTerm<'_>,
    vertices: &[usize],
    mean: &DVector<f64>,
    basis: &DMatrix<f64>,
    features: &FeatureImage,
    landmarks: &[nalgebra::Vector2<f64>],
    models: &Models<'_>,
    weights: &Weights,
) -> Result<CostTerms> {
    let needed: Vec<usize> = vertices.iter().chain(models.shape.landmark_ids()).copied().collect();
    let instance = models.shape.instance_at(p, &needed)?;
    let f = sample_active(instance.as_slice(), c, vertices, features);
    let e = f - mean;
    let (data_cost, texture_prior) = match data {
        DataTerm::Texture(lambda) => (
            (e - basis * lambda).norm_squared(),
            weights.texture_prior * mahalanobis2(lambda, models.texture.pca().eigenvalues()),
        ),
        DataTerm::ProjectedOut(gram) => (projected_norm2(&e, basis, gram), 0.0),
    };
    let landmark = if weights.landmark > 0.0 {
        weights.landmark * landmark_residual(instance.as_slice(), c, landmarks, models.shape).norm_squared()
    } else {
        0.0
    };
    let shape_prior = weights.shape_prior * mahalanobis2(p, models.shape.pca().eigenvalues());
    Ok(CostTerms::new(data_cost, landmark, shape_prior, texture_prior))
}

/// Texture coefficients by least squares on the active rows, through a QR
/// re-orthonormalisation of the restricted basis: `λ = R⁻¹ Qᵀ (F − t̄)`.
pub fn least_squares_texture(sampled: &DVector<f64>, mean: &DVector<f64>, basis: &DMatrix<f64>) -> Result<DVector<f64>> {
    let (m, n_t) = basis.shape();
    if m < n_t {
        return Err(Error::invalid(format!(
            "{m} active texture entries cannot determine {n_t} coefficients"
        )));
    }
    let qr = basis.clone().qr();
    let q = qr.q();
    let r = qr.r();
    let rhs = q.tr_mul(&(sampled - mean));
    r.solve_upper_triangular(&rhs)
        .ok_or(Error::Singular("texture basis restricted to the active vertices"))
}
