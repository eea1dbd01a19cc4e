use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::linalg::thin_svd;

/// Solver settings for principal component pursuit with missing values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PcpConfig {
    /// Sparsity weight; `None` selects `1/√max(rows, cols)`.
    pub lambda: Option<f64>,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PcpConfig {
    fn default() -> Self {
        Self {
            lambda: None,
            tol: 1e-7,
            max_iter: 500,
        }
    }
}

impl PcpConfig {
    pub fn lambda_for(&self, rows: usize, cols: usize) -> f64 {
        self.lambda
            .unwrap_or_else(|| 1.0 / (rows.max(cols) as f64).sqrt())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PcpStatus {
    Converged,
    /// Stopped at the iteration limit; the result is the last iterate.
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct PcpResult {
    pub low_rank: DMatrix<f64>,
    /// Sparse part, zero outside Ω.
    pub sparse: DMatrix<f64>,
    pub iterations: usize,
    /// `‖P_Ω(X − L − E)‖_F / ‖P_Ω(X)‖_F` at termination.
    pub primal_residual: f64,
    pub status: PcpStatus,
    /// `‖L‖_* + λ‖E‖₁` after each iteration.
    pub objective: Vec<f64>,
}

/// Elementwise `sign(a)·max(|a| − τ, 0)`.
pub fn soft_threshold(a: &DMatrix<f64>, tau: f64) -> DMatrix<f64> {
    a.map(|x| shrink(x, tau))
}

#[inline]
fn shrink(x: f64, tau: f64) -> f64 {
    x.signum() * (x.abs() - tau).max(0.0)
}

/// Singular value thresholding `U·shrink(S, τ)·Vᵀ`.
pub fn svt(a: &DMatrix<f64>, tau: f64) -> DMatrix<f64> {
    svt_with_norm(a, tau).0
}

/// SVT that also returns the nuclear norm of the result.
fn svt_with_norm(a: &DMatrix<f64>, tau: f64) -> (DMatrix<f64>, f64) {
    let svd = thin_svd(a);
    let kept = svd
        .singular_values
        .iter()
        .take_while(|&&s| s > tau)
        .count();
    if kept == 0 {
        return (DMatrix::zeros(a.nrows(), a.ncols()), 0.0);
    }
    let mut u = svd.u.columns(0, kept).into_owned();
    let mut nuclear = 0.0;
    for (k, mut col) in u.column_iter_mut().enumerate() {
        let s = svd.singular_values[k] - tau;
        nuclear += s;
        col *= s;
    }
    (u * svd.v_t.rows(0, kept), nuclear)
}

/// Nuclear norm plus weighted ℓ1 norm of the observed part of `E`.
pub fn pcp_objective(l: &DMatrix<f64>, e: &DMatrix<f64>, omega: &[bool], lambda: f64) -> f64 {
    let nuclear: f64 = thin_svd(l).singular_values.sum();
    let l1: f64 = e
        .iter()
        .zip(omega)
        .filter(|(_, &o)| o)
        .map(|(x, _)| x.abs())
        .sum();
    nuclear + lambda * l1
}

/// Principal component pursuit with missing values by ADMM:
/// `min ‖L‖_* + λ‖E‖₁  s.t.  P_Ω(X) = P_Ω(L + E)`.
///
/// `omega` is column-major like `x`. Off Ω the sparse variable is left free,
/// so `L` is completed there by the low-rank prior alone. The penalty starts
/// at `1.25/‖P_Ω X‖₂` and is doubled or halved to keep the primal and dual
/// residuals within a factor 10 of each other.
pub fn pcp_missing_values(
    x: &DMatrix<f64>,
    omega: &[bool],
    lambda: f64,
    tol: f64,
    max_iter: usize,
) -> Result<PcpResult> {
    let (rows, cols) = x.shape();
    check_len("observation mask", rows * cols, omega.len())?;
    if !(lambda > 0.0) {
        return Err(Error::invalid(format!("PCP weight must be positive, got {lambda}")));
    }
    if !(tol > 0.0) || max_iter == 0 {
        return Err(Error::invalid("PCP needs a positive tolerance and iteration count"));
    }
    let mut xo = x.clone();
    for (v, &o) in xo.iter_mut().zip(omega) {
        if !o {
            *v = 0.0;
        }
    }
    let x_norm = xo.norm();
    if x_norm == 0.0 {
        return Ok(PcpResult {
            low_rank: DMatrix::zeros(rows, cols),
            sparse: DMatrix::zeros(rows, cols),
            iterations: 0,
            primal_residual: 0.0,
            status: PcpStatus::Converged,
            objective: vec![0.0],
        });
    }
    let spectral = thin_svd(&xo).singular_values[0];
    let mut mu = 1.25 / spectral;

    let mut l = DMatrix::zeros(rows, cols);
    let mut e = DMatrix::<f64>::zeros(rows, cols);
    let mut y = DMatrix::<f64>::zeros(rows, cols);
    let mut objective = Vec::new();
    let mut primal = f64::INFINITY;
    let mut status = PcpStatus::MaxIterations;
    let mut iterations = 0;

    for it in 0..max_iter {
        iterations = it + 1;
        let (l_new, nuclear) = svt_with_norm(&(&xo - &e + &y / mu), 1.0 / mu);
        l = l_new;

        let e_prev = e.clone();
        let thresh = lambda / mu;
        let mut l1 = 0.0;
        for k in 0..rows * cols {
            let t = xo[k] - l[k] + y[k] / mu;
            e[k] = if omega[k] {
                let s = shrink(t, thresh);
                l1 += s.abs();
                s
            } else {
                t
            };
        }

        let mut r_norm2 = 0.0;
        let mut s_norm2 = 0.0;
        for k in 0..rows * cols {
            let r = xo[k] - l[k] - e[k];
            y[k] += mu * r;
            if omega[k] {
                r_norm2 += r * r;
            }
            let d = e[k] - e_prev[k];
            s_norm2 += d * d;
        }
        primal = r_norm2.sqrt() / x_norm;
        let dual = mu * s_norm2.sqrt() / x_norm;
        objective.push(nuclear + lambda * l1);

        if primal < tol {
            status = PcpStatus::Converged;
            break;
        }
        if primal > 10.0 * dual {
            mu *= 2.0;
        } else if dual > 10.0 * primal {
            mu /= 2.0;
        }
    }
    if status == PcpStatus::MaxIterations {
        log::warn!("PCP stopped after {max_iter} iterations with primal residual {primal:.3e}");
    }
    for (v, &o) in e.iter_mut().zip(omega) {
        if !o {
            *v = 0.0;
        }
    }
    Ok(PcpResult {
        low_rank: l,
        sparse: e,
        iterations,
        primal_residual: primal,
        status,
        objective,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
    }

    #[test]
    fn soft_threshold_examples() {
        let a = DMatrix::from_row_slice(1, 4, &[3.0, 0.5, -0.5, -0.1]);
        let out = soft_threshold(&a, 1.0);
        assert_eq!(out.as_slice(), &[2.0, 0.0, 0.0, 0.0]);
        let out = soft_threshold(&DMatrix::from_element(1, 1, -0.5), 0.2);
        assert!((out[0] + 0.3).abs() < 1e-15);
    }

    #[test]
    fn svt_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = gaussian(8, 5, &mut rng);
        assert!((svt(&a, 0.0) - &a).norm() < 1e-10);
        let smax = thin_svd(&a).singular_values[0];
        assert_eq!(svt(&a, smax), DMatrix::zeros(8, 5));

        let u = gaussian(6, 1, &mut rng).normalize();
        let v = gaussian(4, 1, &mut rng).normalize();
        let sigma = 3.0;
        let r1 = &u * v.transpose() * sigma;
        let out = svt(&r1, sigma / 2.0);
        assert!((out - &r1 * 0.5).norm() < 1e-12);
    }

    #[test]
    fn zero_matrix() {
        let x = DMatrix::zeros(10, 4);
        let res = pcp_missing_values(&x, &[true; 40], 0.3, 1e-7, 10).unwrap();
        assert_eq!(res.low_rank, x);
        assert_eq!(res.sparse, x);
    }

    #[test]
    fn clean_low_rank_is_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let l0 = gaussian(200, 2, &mut rng) * gaussian(50, 2, &mut rng).transpose();
        let omega = vec![true; 200 * 50];
        let lambda = 1.0 / 200f64.sqrt();
        let res = pcp_missing_values(&l0, &omega, lambda, 1e-7, 500).unwrap();
        assert_eq!(res.status, PcpStatus::Converged);
        assert!((&res.low_rank - &l0).norm() / l0.norm() < 1e-6);
        let l1 = |m: &DMatrix<f64>| m.iter().map(|v| v.abs()).sum::<f64>();
        assert!(l1(&res.sparse) / l1(&l0) < 1e-6);
    }

    #[test]
    fn corrupted_with_missing_entries() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let l0 = gaussian(200, 2, &mut rng) * gaussian(50, 2, &mut rng).transpose();
        let mut x = l0.clone();
        let mut omega = vec![true; 200 * 50];
        for k in 0..200 * 50 {
            let u: f64 = rng.random();
            if u < 0.2 {
                omega[k] = false;
                x[k] = 0.0;
            } else if u < 0.3 {
                x[k] += if rng.random::<bool>() { 5.0 } else { -5.0 };
            }
        }
        let res = pcp_missing_values(&x, &omega, 1.0 / 200f64.sqrt(), 1e-7, 500).unwrap();
        assert!((&res.low_rank - &l0).norm() / l0.norm() < 1e-3);
        assert!(res.iterations < 500);
        let mut e0 = &x - &l0;
        for (v, &o) in e0.iter_mut().zip(&omega) {
            if !o {
                *v = 0.0;
            }
        }
        let lambda = 1.0 / 200f64.sqrt();
        let truth = pcp_objective(&l0, &e0, &omega, lambda);
        assert!(*res.objective.last().unwrap() <= truth * (1.0 + 1e-6));
        // feasibility on Ω
        let mut r = 0.0;
        let mut n = 0.0;
        for k in 0..200 * 50 {
            if omega[k] {
                r += (x[k] - res.low_rank[k] - res.sparse[k]).powi(2);
                n += x[k] * x[k];
            }
        }
        assert!((r / n).sqrt() < 1e-7);
        assert!(res.sparse.iter().zip(&omega).all(|(e, &o)| o || *e == 0.0));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn proximal_operators_are_non_expansive(seed in 0u64..1000, tau in 0.0f64..3.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = gaussian(7, 4, &mut rng);
            let b = gaussian(7, 4, &mut rng);
            let d = (&a - &b).norm();
            prop_assert!((svt(&a, tau) - svt(&b, tau)).norm() <= d + 1e-12);
            prop_assert!((soft_threshold(&a, tau) - soft_threshold(&b, tau)).norm() <= d + 1e-12);
        }
    }
}
