//! Dense decompositions shared by the model builders and solvers.

use nalgebra::{DMatrix, DVector};

/// Thin singular value decomposition `A = U·diag(s)·Vᵀ`, singular values descending.
#[derive(Debug, Clone)]
pub struct ThinSvd {
    pub u: DMatrix<f64>,
    pub singular_values: DVector<f64>,
    pub v_t: DMatrix<f64>,
}

pub fn thin_svd(a: &DMatrix<f64>) -> ThinSvd {
    let (r, c) = a.shape();
    let k = r.min(c);
    if k == 0 {
        return ThinSvd {
            u: DMatrix::zeros(r, 0),
            singular_values: DVector::zeros(0),
            v_t: DMatrix::zeros(0, c),
        };
    }
    let m = faer::Mat::<f64>::from_fn(r, c, |i, j| a[(i, j)]);
    let svd = m.thin_svd().expect("SVD of a finite matrix converges");
    let (u, s, v) = (svd.U(), svd.S().column_vector(), svd.V());
    ThinSvd {
        u: DMatrix::from_fn(r, k, |i, j| u[(i, j)]),
        singular_values: DVector::from_fn(k, |i, _| s[i]),
        v_t: DMatrix::from_fn(k, c, |i, j| v[(j, i)]),
    }
}

pub fn singular_values(a: &DMatrix<f64>) -> DVector<f64> {
    thin_svd(a).singular_values
}
