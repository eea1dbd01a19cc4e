use nalgebra::{DMatrix, Matrix3, Vector3};

use super::mesh::TriMesh;
use crate::error::{Error, Result};

/// Convergence threshold on the change of the reference shape between sweeps.
pub const GPA_TOLERANCE: f64 = 1e-10;
pub const GPA_MAX_ITERS: usize = 100;

/// Output of generalized Procrustes analysis.
#[derive(Debug, Clone)]
pub struct ProcrustesResult {
    /// Input meshes, centred, scaled to unit Frobenius norm and rotated onto the mean.
    pub aligned: Vec<TriMesh>,
    pub mean: TriMesh,
    /// Sum of squared distances to the mean after each sweep.
    pub residuals: Vec<f64>,
    pub iterations: usize,
}

/// Generalized Procrustes analysis: removes translation, scale and rotation.
pub fn procrustes_align(meshes: &[TriMesh]) -> Result<Vec<TriMesh>> {
    Ok(generalized_procrustes(meshes)?.aligned)
}

pub fn generalized_procrustes(meshes: &[TriMesh]) -> Result<ProcrustesResult> {
    if meshes.len() < 2 {
        return Err(Error::invalid(format!(
            "Procrustes alignment needs at least 2 meshes, got {}",
            meshes.len()
        )));
    }
    let first = &meshes[0];
    for (i, m) in meshes.iter().enumerate().skip(1) {
        if m.n_vertices() != first.n_vertices() || m.trilist() != first.trilist() {
            return Err(Error::invalid(format!(
                "mesh {i} does not share vertex count and triangulation with mesh 0"
            )));
        }
    }

    let mut shapes: Vec<Vec<Vector3<f64>>> = meshes
        .iter()
        .map(|m| normalise(m.vertices().to_vec()))
        .collect::<Result<_>>()?;
    let mut reference = shapes[0].clone();
    let mut residuals = Vec::new();
    let mut iterations = 0;

    for _ in 0..GPA_MAX_ITERS {
        iterations += 1;
        for shape in &mut shapes {
            let r = optimal_rotation(shape, &reference);
            for v in shape.iter_mut() {
                *v = r * *v;
            }
        }
        let n = reference.len();
        let mut mean = vec![Vector3::zeros(); n];
        for shape in &shapes {
            for (m, v) in mean.iter_mut().zip(shape) {
                *m += v;
            }
        }
        let mean = normalise(mean)?;
        // keep the reference frame fixed so the mean does not drift in rotation
        let r = optimal_rotation(&mean, &reference);
        let mean: Vec<_> = mean.into_iter().map(|v| r * v).collect();

        residuals.push(
            shapes
                .iter()
                .map(|s| s.iter().zip(&mean).map(|(a, b)| (a - b).norm_squared()).sum::<f64>())
                .sum(),
        );
        let change = mean
            .iter()
            .zip(&reference)
            .map(|(a, b)| (a - b).norm_squared())
            .sum::<f64>()
            .sqrt();
        reference = mean;
        if change < GPA_TOLERANCE {
            break;
        }
    }

    let trilist = first.trilist().to_vec();
    let aligned = shapes
        .into_iter()
        .map(|s| TriMesh::new(s, trilist.clone()))
        .collect::<Result<_>>()?;
    Ok(ProcrustesResult {
        aligned,
        mean: TriMesh::new(reference, trilist)?,
        residuals,
        iterations,
    })
}

fn normalise(mut pts: Vec<Vector3<f64>>) -> Result<Vec<Vector3<f64>>> {
    let centroid = pts.iter().sum::<Vector3<f64>>() / pts.len() as f64;
    let mut norm = 0.0;
    for p in &mut pts {
        *p -= centroid;
        norm += p.norm_squared();
    }
    let norm = norm.sqrt();
    if norm == 0.0 {
        return Err(Error::invalid("cannot normalise a mesh with all vertices coincident"));
    }
    for p in &mut pts {
        *p /= norm;
    }
    Ok(pts)
}

/// Rotation `R` minimising `Σ ‖R·src_i − dst_i‖²` (Kabsch).
pub(crate) fn optimal_rotation(src: &[Vector3<f64>], dst: &[Vector3<f64>]) -> Matrix3<f64> {
    let mut cov = Matrix3::zeros();
    for (a, b) in src.iter().zip(dst) {
        cov += b * a.transpose();
    }
    let svd = crate::linalg::thin_svd(&DMatrix::from_column_slice(3, 3, cov.as_slice()));
    let u = Matrix3::from_column_slice(svd.u.as_slice());
    let v_t = Matrix3::from_column_slice(svd.v_t.as_slice());
    let d = (u * v_t).determinant().signum();
    u * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d)) * v_t
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Rotation3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tetra() -> TriMesh {
        TriMesh::new(
            vec![
                Vector3::new(0.0, 0.0, 0.0),
                Vector3::new(1.0, 0.2, 0.0),
                Vector3::new(0.1, 1.3, 0.0),
                Vector3::new(0.3, 0.2, 0.9),
                Vector3::new(-0.5, 0.4, 0.3),
            ],
            vec![[0, 1, 2], [0, 1, 3], [1, 2, 3], [0, 2, 3], [0, 2, 4]],
        )
        .unwrap()
    }

    fn transformed(m: &TriMesh, rot: Matrix3<f64>, scale: f64, shift: Vector3<f64>) -> TriMesh {
        m.with_vertices(m.vertices().iter().map(|v| rot * v * scale + shift).collect())
            .unwrap()
    }

    fn max_diff(a: &TriMesh, b: &TriMesh) -> f64 {
        a.vertices()
            .iter()
            .zip(b.vertices())
            .map(|(x, y)| (x - y).amax())
            .fold(0.0, f64::max)
    }

    #[test]
    fn removes_rotation() {
        let m = tetra();
        let rot = *Rotation3::from_axis_angle(&Vector3::z_axis(), std::f64::consts::FRAC_PI_2)
            .matrix();
        let out = procrustes_align(&[m.clone(), transformed(&m, rot, 1.0, Vector3::zeros())])
            .unwrap();
        assert!(max_diff(&out[0], &out[1]) < 1e-8);
    }

    #[test]
    fn removes_scale_and_translation() {
        let m = tetra();
        let out = procrustes_align(&[
            m.clone(),
            transformed(&m, Matrix3::identity(), 3.0, Vector3::new(1.0, -2.0, 5.0)),
        ])
        .unwrap();
        assert!(max_diff(&out[0], &out[1]) < 1e-8);
    }

    #[test]
    fn needs_two_meshes() {
        assert!(procrustes_align(&[tetra()]).is_err());
    }

    #[test]
    fn residual_decreases_and_mean_is_fixed_point() {
        let m = tetra();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let copies: Vec<_> = (0..5)
            .map(|_| {
                let axis = Vector3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                );
                let rot = *Rotation3::from_scaled_axis(axis).matrix();
                let noisy = m
                    .with_vertices(
                        m.vertices()
                            .iter()
                            .map(|v| {
                                v + Vector3::new(
                                    rng.random_range(-0.1..0.1),
                                    rng.random_range(-0.1..0.1),
                                    rng.random_range(-0.1..0.1),
                                )
                            })
                            .collect(),
                    )
                    .unwrap();
                transformed(&noisy, rot, rng.random_range(0.5..2.0), Vector3::new(1.0, 2.0, 3.0))
            })
            .collect();
        let res = generalized_procrustes(&copies).unwrap();
        assert!(res.iterations < GPA_MAX_ITERS);
        for w in res.residuals.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{:?}", res.residuals);
        }
        // one more sweep leaves the configuration unchanged
        for s in &res.aligned {
            let r = optimal_rotation(s.vertices(), res.mean.vertices());
            assert!((r - Matrix3::identity()).norm() < 1e-8);
        }
        let mut mean = vec![Vector3::zeros(); m.n_vertices()];
        for s in &res.aligned {
            for (acc, v) in mean.iter_mut().zip(s.vertices()) {
                *acc += v;
            }
        }
        let mean = normalise(mean).unwrap();
        let diff = mean
            .iter()
            .zip(res.mean.vertices())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(diff < 1e-8, "{diff}");
    }
}
