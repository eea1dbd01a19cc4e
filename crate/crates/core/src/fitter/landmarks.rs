use nalgebra::{DMatrix, DVector, Vector2, Vector3};

use super::config::FitConfig;
use super::linearize::{camera_columns, landmark_terms};
use super::solve::{mahalanobis2, solve_spd};
use crate::camera::{quaternion_from_axis_angle, CameraParams, N_CAMERA};
use crate::error::{check_len, Error, Result};
use crate::linalg::singular_values;
use crate::model::ShapeModel;

/// Principal point at the image centre, with pixel centres at integer coordinates.
pub fn image_centre(width: usize, height: usize) -> Vector2<f64> {
    Vector2::new((width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0)
}

/// Landmark-only fit: `c_l‖W_l(p, c) − s_l‖² + c_s‖p‖²_{Σ_s⁻¹}`.
///
/// `image_size` is `(width, height)`. When the configuration has no landmark
/// weight, the default is taken with `CN = 3N`.
pub fn fit_landmarks_only(
    landmarks: &[Vector2<f64>],
    shape: &ShapeModel,
    image_size: (usize, usize),
    cfg: &FitConfig,
) -> Result<(DVector<f64>, CameraParams)> {
    let c_l = cfg.landmark_weight_for(3 * shape.n_vertices(), landmarks.len());
    fit_landmarks_weighted(landmarks, shape, image_size, cfg, c_l)
}

pub(crate) fn fit_landmarks_weighted(
    landmarks: &[Vector2<f64>],
    shape: &ShapeModel,
    (width, height): (usize, usize),
    cfg: &FitConfig,
    c_l: f64,
) -> Result<(DVector<f64>, CameraParams)> {
    cfg.validate()?;
    let focal = cfg.focal_for(width, height);
    let pp = image_centre(width, height);
    let c0 = similarity_camera(landmarks, shape, focal, pp)?;
    // a zero landmark weight would leave nothing to fit; keep the geometry well posed
    let c_l = if c_l > 0.0 { c_l } else { 1.0 };
    let p0 = DVector::zeros(shape.n_components());
    let (_, c1) = gauss_newton(landmarks, shape, p0, c0, c_l, 0.0, cfg, false)?;
    gauss_newton(
        landmarks,
        shape,
        DVector::zeros(shape.n_components()),
        c1,
        c_l,
        cfg.shape_prior_weight,
        cfg,
        true,
    )
}

/// Camera from the 2D similarity between the mean-shape landmarks' `(x, y)`
/// and the image landmarks: in-plane angle → rotation about z, scale → `t_z`,
/// offset → `(t_x, t_y)`.
pub fn similarity_camera(
    landmarks: &[Vector2<f64>],
    shape: &ShapeModel,
    focal: f64,
    principal_point: Vector2<f64>,
) -> Result<CameraParams> {
    let ids = shape.landmark_ids();
    check_len("landmarks", ids.len(), landmarks.len())?;
    if ids.len() < 4 {
        return Err(Error::DegenerateLandmarks(format!(
            "need at least 4 landmarks, got {}",
            ids.len()
        )));
    }
    let mean = shape.mean_mesh();
    let model_pts: Vec<Vector3<f64>> = ids.iter().map(|&i| mean.vertices()[i]).collect();
    let n = ids.len() as f64;
    let centroid = model_pts.iter().sum::<Vector3<f64>>() / n;
    let spread = DMatrix::from_fn(3, ids.len(), |r, k| model_pts[k][r] - centroid[r]);
    let sv = singular_values(&spread);
    if sv[2] <= 1e-6 * sv[0] {
        return Err(Error::DegenerateLandmarks(
            "model landmark vertices are coplanar".into(),
        ));
    }
    let target: Vec<Vector2<f64>> = landmarks.iter().map(|l| l - principal_point).collect();
    let b_bar = target.iter().sum::<Vector2<f64>>() / n;
    let a_bar = Vector2::new(centroid.x, centroid.y);
    let (mut dot, mut cross, mut var_a, mut var_b) = (0.0, 0.0, 0.0, 0.0);
    for (x, b) in model_pts.iter().zip(&target) {
        let a = Vector2::new(x.x, x.y) - a_bar;
        let b = b - b_bar;
        dot += a.dot(&b);
        cross += a.x * b.y - a.y * b.x;
        var_a += a.norm_squared();
        var_b += b.norm_squared();
    }
    if var_b <= 1e-12 || var_a <= 1e-12 || !(var_b.is_finite()) {
        return Err(Error::DegenerateLandmarks(
            "landmarks have no spatial extent".into(),
        ));
    }
    let theta = cross.atan2(dot);
    let scale = (theta.cos() * dot + theta.sin() * cross) / var_a;
    if scale <= 0.0 {
        return Err(Error::DegenerateLandmarks("landmark similarity has non-positive scale".into()));
    }
    let (s, c) = theta.sin_cos();
    let rotated_bar = Vector2::new(c * a_bar.x - s * a_bar.y, s * a_bar.x + c * a_bar.y);
    let offset = b_bar - rotated_bar * scale;
    let tz = focal / scale - centroid.z;
    let t = Vector3::new(offset.x / scale, offset.y / scale, tz);
    CameraParams::new(
        focal,
        quaternion_from_axis_angle(&Vector3::z(), theta),
        t,
        principal_point,
    )
}

fn landmark_cost(
    landmarks: &[Vector2<f64>],
    shape: &ShapeModel,
    p: &DVector<f64>,
    c: &CameraParams,
    c_l: f64,
    c_s: f64,
) -> Result<f64> {
    let inst = shape.instance_flat(p)?;
    let r = super::linearize::landmark_residual(inst.as_slice(), c, landmarks, shape);
    Ok(c_l * r.norm_squared() + c_s * mahalanobis2(p, shape.pca().eigenvalues()))
}

#[allow(clippy::too_many_arguments)]
fn gauss_newton(
    landmarks: &[Vector2<f64>],
    shape: &ShapeModel,
    mut p: DVector<f64>,
    mut c: CameraParams,
    c_l: f64,
    c_s: f64,
    cfg: &FitConfig,
    with_shape: bool,
) -> Result<(DVector<f64>, CameraParams)> {
    let cam_cols = camera_columns(cfg.optimize_focal);
    let n_s = shape.n_components();
    let n_c = cam_cols.len();
    let eig = shape.pca().eigenvalues();
    let mut cost = landmark_cost(landmarks, shape, &p, &c, c_l, c_s)?;
    if !cost.is_finite() {
        return Err(Error::DegenerateLandmarks(
            "initial camera places landmarks behind the camera".into(),
        ));
    }
    for _ in 0..cfg.landmark_iters {
        let inst = shape.instance_flat(&p)?;
        let (r, jac) = landmark_terms(inst.as_slice(), &c, landmarks, shape, &cam_cols)?;
        let (h, g) = if with_shape {
            let mut h = jac.transpose() * &jac * c_l;
            let mut g = jac.transpose() * &r * c_l;
            for i in 0..n_s {
                h[(i, i)] += c_s / eig[i];
                g[i] += c_s * p[i] / eig[i];
            }
            (h, g)
        } else {
            let jc = jac.columns(n_s, n_c);
            (jc.transpose() * jc * c_l, jc.transpose() * &r * c_l)
        };
        let delta = -solve_spd(h, &g, "landmark Gauss-Newton step")?;
        let (dp, dc_red) = if with_shape {
            (delta.rows(0, n_s).into_owned(), delta.rows(n_s, n_c).into_owned())
        } else {
            (DVector::zeros(n_s), delta)
        };
        let mut dc = [0.0; N_CAMERA];
        for (&col, &d) in cam_cols.iter().zip(dc_red.iter()) {
            dc[col] = d;
        }
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..=cfg.max_halvings {
            let p_new = &p + &dp * alpha;
            let c_new = c.updated(&dc.map(|x| x * alpha), cfg.optimize_focal);
            let cost_new = landmark_cost(landmarks, shape, &p_new, &c_new, c_l, c_s)?;
            if cost_new <= cost {
                p = p_new;
                c = c_new;
                cost = cost_new;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        let step = alpha * (dp.norm() + dc.iter().map(|x| x * x).sum::<f64>().sqrt());
        if !accepted || step < cfg.step_tolerance {
            break;
        }
    }
    Ok((p, c))
}
