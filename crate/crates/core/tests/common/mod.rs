//! Scene setup and independent oracles shared by the integration tests and
//! the acceptance runner.
#![allow(dead_code)]

use morphfit::camera::{warp, CameraParams, EPS_NEAR, N_CAMERA};
use morphfit::features::{FeatureExtractor, IdentityFeatures};
use morphfit::fitter::{Linearization, Models, Weights};
use morphfit::synth::{perturb_init, random_truth, render_scene, SyntheticScene};
use morphfit::{FeatureImage, ShapeModel, TextureModel, TriMesh};
use nalgebra::{DMatrix, DVector, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const SIZE: usize = 256;

pub struct Scene {
    pub scene: SyntheticScene,
    pub features: FeatureImage,
    pub p0: DVector<f64>,
    pub c0: CameraParams,
}

/// Random truth within 15° of frontal, rendered at 256², plus the standard
/// perturbed start: +10° yaw, 5% of t_z translation, 0.3σ shape noise.
pub fn scene(shape: &ShapeModel, texture: &TextureModel, seed: u64) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (p, c, lambda) = random_truth(shape, texture, SIZE, SIZE, 1.0, 1.0, 15f64.to_radians(), &mut rng);
    let scene = render_scene(shape, texture, &p, &c, &lambda, SIZE, SIZE).unwrap();
    let features = IdentityFeatures.extract(&scene.image).unwrap();
    let (p0, c0) = perturb_init(shape, &p, &c, 10f64.to_radians(), 0.05 * c.t.z, 0.3, &mut rng);
    Scene { scene, features, p0, c0 }
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

/// Mean per-vertex distance over the inter-ocular distance.
pub fn mean_dense_error(fitted: &TriMesh, truth: &TriMesh, interocular: f64) -> f64 {
    let total: f64 = fitted
        .vertices()
        .iter()
        .zip(truth.vertices())
        .map(|(a, b)| (a - b).norm())
        .sum();
    total / (fitted.n_vertices() as f64 * interocular)
}

fn flat_points(p: &DVector<f64>, c: &CameraParams, shape: &ShapeModel) -> DVector<f64> {
    let proj = warp(p, c, shape).unwrap();
    DVector::from_iterator(2 * proj.len(), proj.points.iter().flat_map(|q| [q.x, q.y]))
}

/// Central differences of the warp, step `h`, over `[p, f, q1, q2, q3, tx, ty, tz]`.
/// The quaternion columns differentiate the multiplicative update.
pub fn warp_jacobian_fd(p: &DVector<f64>, c: &CameraParams, shape: &ShapeModel, h: f64) -> DMatrix<f64> {
    let n_s = p.len();
    let rows = 2 * shape.n_vertices();
    let mut out = DMatrix::zeros(rows, n_s + N_CAMERA);
    for k in 0..n_s {
        let (mut a, mut b) = (p.clone(), p.clone());
        a[k] += h;
        b[k] -= h;
        let d = (flat_points(&a, c, shape) - flat_points(&b, c, shape)) / (2.0 * h);
        out.set_column(k, &d);
    }
    for k in 0..N_CAMERA {
        let mut delta = [0.0; N_CAMERA];
        delta[k] = h;
        let plus = c.updated(&delta, true);
        delta[k] = -h;
        let minus = c.updated(&delta, true);
        let d = (flat_points(p, &plus, shape) - flat_points(p, &minus, shape)) / (2.0 * h);
        out.set_column(n_s + k, &d);
    }
    out
}

/// Largest column-wise `‖a − b‖ / ‖b‖`.
pub fn max_relative_column_error(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (0..a.ncols())
        .map(|j| (a.column(j) - b.column(j)).norm() / b.column(j).norm().max(1e-12))
        .fold(0.0, f64::max)
}

/// `I − Q Qᵀ` with `Q` an orthonormal basis of the columns of `u` (Householder QR).
pub fn dense_projector(u: &DMatrix<f64>) -> DMatrix<f64> {
    let q = u.clone().qr().q();
    DMatrix::identity(u.nrows(), u.nrows()) - &q * q.transpose()
}

/// Dense project-out increment over `(p, c_cols)`: the full projector,
/// explicit normal equations and an LU solve.
pub fn dense_project_out_step(
    lin: &Linearization,
    p: &DVector<f64>,
    models: &Models<'_>,
    weights: &Weights,
    decoupled: bool,
) -> DVector<f64> {
    let proj = dense_projector(lin.basis);
    let j = lin.jacobian_t.transpose();
    let e = &lin.sampled - lin.mean;
    let n_s = lin.n_shape();
    let eig = models.shape.pca().eigenvalues();
    let mut h = j.transpose() * &proj * &j
        + lin.landmark_jacobian.transpose() * &lin.landmark_jacobian * weights.landmark;
    let mut g = j.transpose() * &proj * &e
        + lin.landmark_jacobian.transpose() * &lin.landmark_residual * weights.landmark;
    for i in 0..n_s {
        h[(i, i)] += weights.shape_prior / eig[i];
        g[i] += weights.shape_prior * p[i] / eig[i];
    }
    if decoupled {
        let n = h.nrows();
        for r in 0..n {
            for c in 0..n {
                if (r < n_s) != (c < n_s) {
                    h[(r, c)] = 0.0;
                }
            }
        }
    }
    -h.lu().solve(&g).unwrap()
}

/// Simultaneous increment as the least-squares solution of the stacked,
/// square-root-weighted residual system, solved by SVD.
pub fn stacked_simultaneous_step(
    lin: &Linearization,
    p: &DVector<f64>,
    lambda: &DVector<f64>,
    models: &Models<'_>,
    weights: &Weights,
) -> DVector<f64> {
    let (a, b) = stacked_system(lin, p, lambda, models, weights);
    a.svd(true, true).solve(&(-b), 1e-14).unwrap()
}

/// `(A, b)` such that the linearised simultaneous cost is `‖A δ + b‖²`.
pub fn stacked_system(
    lin: &Linearization,
    p: &DVector<f64>,
    lambda: &DVector<f64>,
    models: &Models<'_>,
    weights: &Weights,
) -> (DMatrix<f64>, DVector<f64>) {
    let n = lin.n_params();
    let n_s = lin.n_shape();
    let n_t = lambda.len();
    let m = lin.sampled.len();
    let l2 = lin.landmark_residual.len();
    let rows = m + l2 + n_s + n_t;
    let mut a = DMatrix::zeros(rows, n + n_t);
    let mut b = DVector::zeros(rows);
    a.view_mut((0, 0), (m, n)).copy_from(&lin.jacobian_t.transpose());
    a.view_mut((0, n), (m, n_t)).copy_from(&(-lin.basis));
    b.rows_mut(0, m).copy_from(&(&lin.sampled - lin.mean - lin.basis * lambda));
    let wl = weights.landmark.sqrt();
    a.view_mut((m, 0), (l2, n)).copy_from(&(&lin.landmark_jacobian * wl));
    b.rows_mut(m, l2).copy_from(&(&lin.landmark_residual * wl));
    let es = models.shape.pca().eigenvalues();
    let et = models.texture.pca().eigenvalues();
    for i in 0..n_s {
        let w = (weights.shape_prior / es[i]).sqrt();
        a[(m + l2 + i, i)] = w;
        b[m + l2 + i] = w * p[i];
    }
    for i in 0..n_t {
        let w = (weights.texture_prior / et[i]).sqrt();
        a[(m + l2 + n_s + i, n + i)] = w;
        b[m + l2 + n_s + i] = w * lambda[i];
    }
    (a, b)
}

/// Largest principal angle (radians) between the column spans of `a` and `b`.
pub fn max_principal_angle(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let qa = a.clone().qr().q();
    let qb = b.clone().qr().q();
    let s = (qa.transpose() * qb).singular_values();
    s.iter().map(|&x| x.min(1.0).acos()).fold(0.0, f64::max)
}

/// Does the open segment `o → x` cross triangle `(a, b, c)`? Plane
/// intersection followed by same-side tests on the three edges.
fn segment_crosses(o: &Vector3<f64>, x: &Vector3<f64>, a: &Vector3<f64>, b: &Vector3<f64>, c: &Vector3<f64>) -> bool {
    let n = (b - a).cross(&(c - a));
    let d = x - o;
    let denom = n.dot(&d);
    if denom.abs() < 1e-14 * n.norm() * d.norm() {
        return false;
    }
    let t = n.dot(&(a - o)) / denom;
    if !(t > 1e-9 && t < 1.0 - 1e-9) {
        return false;
    }
    let q = o + d * t;
    let s0 = (b - a).cross(&(q - a)).dot(&n);
    let s1 = (c - b).cross(&(q - b)).dot(&n);
    let s2 = (a - c).cross(&(q - c)).dot(&n);
    s0 >= 0.0 && s1 >= 0.0 && s2 >= 0.0
}

/// Per-vertex visibility by testing every triangle against the segment from
/// the camera centre.
pub fn brute_force_visibility(mesh: &TriMesh, c: &CameraParams) -> Vec<bool> {
    let r = c.rotation();
    let cam: Vec<Vector3<f64>> = mesh.vertices().iter().map(|x| r * x + c.t).collect();
    let o = Vector3::zeros();
    (0..cam.len())
        .map(|v| {
            cam[v].z > EPS_NEAR
                && !mesh.trilist().iter().any(|t| {
                    !t.contains(&v) && segment_crosses(&o, &cam[v], &cam[t[0]], &cam[t[1]], &cam[t[2]])
                })
        })
        .collect()
}
