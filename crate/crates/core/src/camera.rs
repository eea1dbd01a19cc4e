//! Quaternion-parametrised pinhole camera and the warp `W(p, c) = P(S(p), c)`.
//!
//! Camera increments are ordered `[f, q1, q2, q3, tx, ty, tz]`. The three
//! rotation entries live in the tangent space of the multiplicative update
//! `q ← Δq·q`, so their Jacobian columns are derivatives at `Δq = identity`.

use nalgebra::{DMatrix, DVector, Matrix2x3, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::model::ShapeModel;

/// Vertices with camera-space depth at or below this are treated as behind the camera.
pub const EPS_NEAR: f64 = 1e-4;
/// Number of camera parameters.
pub const N_CAMERA: usize = 7;
const UNIT_TOL: f64 = 1e-9;

/// Unit quaternion `(q0, q1, q2, q3)` with scalar part first.
pub type Quaternion = [f64; 4];

pub const IDENTITY_QUATERNION: Quaternion = [1.0, 0.0, 0.0, 0.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraParams {
    #[serde(rename = "f")]
    pub focal: f64,
    pub q: Quaternion,
    #[serde(with = "vec3_serde")]
    pub t: Vector3<f64>,
    #[serde(with = "vec2_serde")]
    pub principal_point: Vector2<f64>,
}

impl CameraParams {
    pub fn new(
        focal: f64,
        q: Quaternion,
        t: Vector3<f64>,
        principal_point: Vector2<f64>,
    ) -> Result<Self> {
        if !(focal.is_finite() && focal > 0.0) {
            return Err(Error::invalid(format!("focal length must be positive, got {focal}")));
        }
        let norm2: f64 = q.iter().map(|x| x * x).sum();
        if (norm2 - 1.0).abs() > UNIT_TOL {
            return Err(Error::invalid(format!("quaternion has squared norm {norm2}, expected 1")));
        }
        Ok(Self {
            focal,
            q,
            t,
            principal_point,
        })
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        rotation_matrix_unchecked(&self.q)
    }

    /// Camera centre in object coordinates, `−Rᵀt`.
    pub fn centre(&self) -> Vector3<f64> {
        -(self.rotation().transpose() * self.t)
    }

    /// `[f, q1, q2, q3, tx, ty, tz]`.
    pub fn to_vector(&self) -> [f64; N_CAMERA] {
        [
            self.focal, self.q[1], self.q[2], self.q[3], self.t.x, self.t.y, self.t.z,
        ]
    }

    /// Applies an increment: additive on `f` and `t`, multiplicative on `q`.
    pub fn updated(&self, delta: &[f64; N_CAMERA], optimize_focal: bool) -> CameraParams {
        let focal = if optimize_focal {
            (self.focal + delta[0]).max(f64::EPSILON)
        } else {
            self.focal
        };
        CameraParams {
            focal,
            q: quaternion_update(&self.q, &Vector3::new(delta[1], delta[2], delta[3])),
            t: self.t + Vector3::new(delta[4], delta[5], delta[6]),
            principal_point: self.principal_point,
        }
    }
}

/// Rotation matrix of a unit quaternion.
pub fn rotation_from_quaternion(q: &Quaternion) -> Result<Matrix3<f64>> {
    let norm2: f64 = q.iter().map(|x| x * x).sum();
    if (norm2 - 1.0).abs() >= UNIT_TOL {
        return Err(Error::invalid(format!(
            "quaternion must have unit norm, |q|² = {norm2}"
        )));
    }
    Ok(rotation_matrix_unchecked(q))
}

fn rotation_matrix_unchecked(q: &Quaternion) -> Matrix3<f64> {
    let [q0, q1, q2, q3] = *q;
    2.0 * Matrix3::new(
        0.5 - q2 * q2 - q3 * q3,
        q1 * q2 - q0 * q3,
        q1 * q3 + q0 * q2,
        q1 * q2 + q0 * q3,
        0.5 - q1 * q1 - q3 * q3,
        q2 * q3 - q0 * q1,
        q1 * q3 - q0 * q2,
        q2 * q3 + q0 * q1,
        0.5 - q1 * q1 - q2 * q2,
    )
}

/// Hamilton product `a·b`.
pub fn quaternion_mul(a: &Quaternion, b: &Quaternion) -> Quaternion {
    let (a0, av) = (a[0], Vector3::new(a[1], a[2], a[3]));
    let (b0, bv) = (b[0], Vector3::new(b[1], b[2], b[3]));
    let v = bv * a0 + av * b0 + av.cross(&bv);
    [a0 * b0 - av.dot(&bv), v.x, v.y, v.z]
}

pub fn quaternion_from_axis_angle(axis: &Vector3<f64>, angle: f64) -> Quaternion {
    let axis = axis.normalize();
    let (s, c) = (0.5 * angle).sin_cos();
    [c, axis.x * s, axis.y * s, axis.z * s]
}

/// Angle of the relative rotation between two unit quaternions, in radians.
pub fn quaternion_angle(a: &Quaternion, b: &Quaternion) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    2.0 * dot.abs().min(1.0).acos()
}

/// `q ← (Δq)·q` with `Δq = (√(1 − ‖δ‖²), δ)`, renormalised.
///
/// Increments with `‖δ‖ ≥ 1` are rescaled to norm 0.5 first.
pub fn quaternion_update(q: &Quaternion, delta: &Vector3<f64>) -> Quaternion {
    let mut d = *delta;
    let n = d.norm();
    if n >= 1.0 {
        d *= 0.5 / n;
    }
    let d0 = (1.0 - d.norm_squared()).sqrt();
    let qv = Vector3::new(q[1], q[2], q[3]);
    let head = d0 * q[0] - d.dot(&qv);
    let tail = qv * d0 + d * q[0] + d.cross(&qv);
    let mut out = [head, tail.x, tail.y, tail.z];
    let norm = out.iter().map(|x| x * x).sum::<f64>().sqrt();
    for x in &mut out {
        *x /= norm;
    }
    out
}

/// `R·x + t`.
pub fn view_transform(x: &Vector3<f64>, c: &CameraParams) -> Vector3<f64> {
    c.rotation() * x + c.t
}

/// `(f / v_z)·(v_x, v_y) + (c_x, c_y)`.
pub fn perspective_project(
    v: &Vector3<f64>,
    focal: f64,
    principal_point: &Vector2<f64>,
) -> Result<Vector2<f64>> {
    if v.z <= EPS_NEAR {
        return Err(Error::BehindCamera {
            vertex: 0,
            depth: v.z,
        });
    }
    Ok(Vector2::new(v.x, v.y) * (focal / v.z) + principal_point)
}

/// Image positions and camera-space depths of a projected mesh.
///
/// Vertices behind the camera keep their depth and get NaN image coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedShape {
    pub points: Vec<Vector2<f64>>,
    pub depths: Vec<f64>,
}

impl ProjectedShape {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn in_front(&self, v: usize) -> bool {
        self.depths[v] > EPS_NEAR
    }

    /// `[x0, y0, x1, y1, ...]`.
    pub fn to_flat(&self) -> DVector<f64> {
        DVector::from_iterator(2 * self.points.len(), self.points.iter().flat_map(|p| [p.x, p.y]))
    }
}

/// Projects a flat `3N` shape vector.
pub fn camera_apply(shape: &[f64], c: &CameraParams) -> Result<ProjectedShape> {
    if shape.len() % 3 != 0 {
        return Err(Error::invalid(format!(
            "shape vector length {} is not a multiple of 3",
            shape.len()
        )));
    }
    let r = c.rotation();
    let n = shape.len() / 3;
    let mut points = Vec::with_capacity(n);
    let mut depths = Vec::with_capacity(n);
    for x in shape.chunks_exact(3) {
        let v = r * Vector3::new(x[0], x[1], x[2]) + c.t;
        depths.push(v.z);
        points.push(if v.z > EPS_NEAR {
            Vector2::new(v.x, v.y) * (c.focal / v.z) + c.principal_point
        } else {
            Vector2::new(f64::NAN, f64::NAN)
        });
    }
    Ok(ProjectedShape { points, depths })
}

/// `W(p, c)`: projection of the shape instance.
pub fn warp(p: &DVector<f64>, c: &CameraParams, model: &ShapeModel) -> Result<ProjectedShape> {
    let s = model.instance_flat(p)?;
    camera_apply(s.as_slice(), c)
}

/// Projects only the listed vertices of the instance; returns points and depths in that order.
pub fn warp_vertices(
    instance: &[f64],
    vertices: &[usize],
    c: &CameraParams,
) -> (Vec<Vector2<f64>>, Vec<f64>) {
    let r = c.rotation();
    let mut pts = Vec::with_capacity(vertices.len());
    let mut depths = Vec::with_capacity(vertices.len());
    for &v in vertices {
        let x = Vector3::new(instance[3 * v], instance[3 * v + 1], instance[3 * v + 2]);
        let y = r * x + c.t;
        depths.push(y.z);
        pts.push(if y.z > EPS_NEAR {
            Vector2::new(y.x, y.y) * (c.focal / y.z) + c.principal_point
        } else {
            Vector2::new(f64::NAN, f64::NAN)
        });
    }
    (pts, depths)
}

/// Jacobians of the warp for a set of vertices: rows `2k, 2k+1` belong to `vertices[k]`.
#[derive(Debug, Clone)]
pub struct WarpJacobians {
    pub d_shape: DMatrix<f64>,
    pub d_camera: DMatrix<f64>,
}

/// Analytic `∂W/∂p` (2N×n_s) and `∂W/∂c` (2N×7) for all vertices.
pub fn warp_jacobians(
    p: &DVector<f64>,
    c: &CameraParams,
    model: &ShapeModel,
) -> Result<WarpJacobians> {
    let all: Vec<usize> = (0..model.n_vertices()).collect();
    warp_jacobians_for(p, c, model, &all)
}

pub fn warp_jacobians_for(
    p: &DVector<f64>,
    c: &CameraParams,
    model: &ShapeModel,
    vertices: &[usize],
) -> Result<WarpJacobians> {
    let instance = model.instance_flat(p)?;
    warp_jacobians_at(instance.as_slice(), c, model, vertices)
}

/// As [`warp_jacobians_for`] with a precomputed flat instance `S(p)`.
pub fn warp_jacobians_at(
    instance: &[f64],
    c: &CameraParams,
    model: &ShapeModel,
    vertices: &[usize],
) -> Result<WarpJacobians> {
    check_len("shape instance", 3 * model.n_vertices(), instance.len())?;
    let r = c.rotation();
    let n_s = model.n_components();
    let mut d_shape = DMatrix::zeros(2 * vertices.len(), n_s);
    let mut d_camera = DMatrix::zeros(2 * vertices.len(), N_CAMERA);
    let mut shape_rows = vec![0.0; 2 * n_s];
    for (k, &v) in vertices.iter().enumerate() {
        let cam_rows = vertex_warp_jacobian(instance, c, &r, model, v, &mut shape_rows)?;
        for row in 0..2 {
            for j in 0..n_s {
                d_shape[(2 * k + row, j)] = shape_rows[row * n_s + j];
            }
            for j in 0..N_CAMERA {
                d_camera[(2 * k + row, j)] = cam_rows[row][j];
            }
        }
    }
    Ok(WarpJacobians { d_shape, d_camera })
}

/// Warp Jacobian of vertex `v` given `R = c.rotation()`. The `2·n_s` shape
/// derivatives are written row-major into `d_shape` (`∂u/∂p` then `∂v/∂p`);
/// the two camera rows are returned.
pub(crate) fn vertex_warp_jacobian(
    instance: &[f64],
    c: &CameraParams,
    r: &Matrix3<f64>,
    model: &ShapeModel,
    v: usize,
    d_shape: &mut [f64],
) -> Result<[[f64; N_CAMERA]; 2]> {
    let x = Vector3::new(instance[3 * v], instance[3 * v + 1], instance[3 * v + 2]);
    let y = r * x;
    let cam = y + c.t;
    if cam.z <= EPS_NEAR {
        return Err(Error::BehindCamera {
            vertex: v,
            depth: cam.z,
        });
    }
    let inv_z = 1.0 / cam.z;
    let s = c.focal * inv_z;
    let dproj = Matrix2x3::new(
        s,
        0.0,
        -s * cam.x * inv_z,
        0.0,
        s,
        -s * cam.y * inv_z,
    );
    let dp = dproj * r;
    let n_s = model.n_components();
    let (du, dv) = d_shape.split_at_mut(n_s);
    du.iter_mut().for_each(|o| *o = 0.0);
    dv.iter_mut().for_each(|o| *o = 0.0);
    for a in 0..3 {
        let (wu, wv) = (dp[(0, a)], dp[(1, a)]);
        for ((ou, ov), &b) in du.iter_mut().zip(dv.iter_mut()).zip(model.basis_row(3 * v + a)) {
            *ou += wu * b;
            *ov += wv * b;
        }
    }

    let drot = dproj * (-2.0 * y.cross_matrix());
    let mut rows = [[0.0; N_CAMERA]; 2];
    rows[0][0] = cam.x * inv_z;
    rows[1][0] = cam.y * inv_z;
    for row in 0..2 {
        for a in 0..3 {
            rows[row][1 + a] = drot[(row, a)];
            rows[row][4 + a] = dproj[(row, a)];
        }
    }
    Ok(rows)
}

mod vec3_serde {
    use nalgebra::Vector3;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &Vector3<f64>, s: S) -> Result<S::Ok, S::Error> {
        [v.x, v.y, v.z].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vector3<f64>, D::Error> {
        let a = <[f64; 3]>::deserialize(d)?;
        Ok(Vector3::new(a[0], a[1], a[2]))
    }
}

mod vec2_serde {
    use nalgebra::Vector2;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &Vector2<f64>, s: S) -> Result<S::Ok, S::Error> {
        [v.x, v.y].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vector2<f64>, D::Error> {
        let a = <[f64; 2]>::deserialize(d)?;
        Ok(Vector2::new(a[0], a[1]))
    }
}
