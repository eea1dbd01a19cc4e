use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Error, Result};

/// Tolerance on `basisᵀ·basis − I` accepted by [`PcaModel::new`].
pub const ORTHONORMALITY_TOL: f64 = 1e-10;

/// Linear Gaussian model: `mean + basis · coefficients`, with one variance
/// (eigenvalue) per basis column.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    mean: DVector<f64>,
    basis: DMatrix<f64>,
    eigenvalues: DVector<f64>,
}

impl PcaModel {
    pub fn new(mean: DVector<f64>, basis: DMatrix<f64>, eigenvalues: DVector<f64>) -> Result<Self> {
        check_len("pca basis rows", mean.len(), basis.nrows())?;
        check_len("pca eigenvalues", basis.ncols(), eigenvalues.len())?;
        if let Some((i, ev)) = eigenvalues
            .iter()
            .enumerate()
            .find(|(_, ev)| !(ev.is_finite() && **ev > 0.0))
        {
            return Err(Error::invalid(format!(
                "eigenvalue {i} must be strictly positive, got {ev}"
            )));
        }
        if eigenvalues.as_slice().windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::invalid("eigenvalues must be non-increasing"));
        }
        let deviation = orthonormality_error(&basis);
        if deviation > ORTHONORMALITY_TOL {
            return Err(Error::invalid(format!(
                "basis columns are not orthonormal (max |UᵀU − I| = {deviation:e})"
            )));
        }
        Ok(Self {
            mean,
            basis,
            eigenvalues,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn n_components(&self) -> usize {
        self.basis.ncols()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    /// `mean + basis · weights`.
    pub fn instance(&self, weights: &DVector<f64>) -> Result<DVector<f64>> {
        check_len("pca weights", self.n_components(), weights.len())?;
        Ok(&self.mean + &self.basis * weights)
    }

    /// Least-squares coefficients of `sample` in this model (orthonormal basis, so a plain projection).
    pub fn project(&self, sample: &DVector<f64>) -> Result<DVector<f64>> {
        check_len("pca sample", self.dim(), sample.len())?;
        Ok(self.basis.tr_mul(&(sample - &self.mean)))
    }

    /// Keeps the leading `n` components.
    pub fn truncated(&self, n: usize) -> Result<Self> {
        if n > self.n_components() {
            return Err(Error::invalid(format!(
                "cannot keep {n} of {} components",
                self.n_components()
            )));
        }
        Ok(Self {
            mean: self.mean.clone(),
            basis: self.basis.columns(0, n).into_owned(),
            eigenvalues: self.eigenvalues.rows(0, n).into_owned(),
        })
    }

    /// Replaces the mean, keeping basis and eigenvalues.
    pub fn with_mean(&self, mean: DVector<f64>) -> Result<Self> {
        check_len("pca mean", self.dim(), mean.len())?;
        Ok(Self {
            mean,
            basis: self.basis.clone(),
            eigenvalues: self.eigenvalues.clone(),
        })
    }
}

/// `max |UᵀU − I|`.
pub fn orthonormality_error(basis: &DMatrix<f64>) -> f64 {
    let gram = basis.tr_mul(basis);
    let n = gram.nrows();
    let mut worst = 0.0f64;
    for j in 0..n {
        for i in 0..n {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((gram[(i, j)] - target).abs());
        }
    }
    worst
}

/// PCA of the columns of `samples` (D×M) through a thin SVD of the centred data.
///
/// Eigenvalues are the sample variances `σ²/(M−1)`; numerically zero ones are
/// floored at the smallest positive normal so the model stays valid.
pub fn pca_from_samples(samples: &DMatrix<f64>, n_keep: usize) -> Result<PcaModel> {
    let (d, m) = samples.shape();
    if m < 2 {
        return Err(Error::invalid(format!("PCA needs at least 2 samples, got {m}")));
    }
    if n_keep == 0 || n_keep > d.min(m - 1) {
        return Err(Error::invalid(format!(
            "n_keep = {n_keep} must be in [1, min(D, M-1)] = [1, {}]",
            d.min(m - 1)
        )));
    }
    let mean = samples.column_mean();
    let mut centred = samples.clone();
    for mut col in centred.column_iter_mut() {
        col -= &mean;
    }
    let (basis, singular) = thin_left_singular(centred, n_keep);
    let eigenvalues = singular.map(|s| (s * s / (m - 1) as f64).max(f64::MIN_POSITIVE));
    PcaModel::new(mean, basis, eigenvalues)
}

/// Leading `n` left singular vectors and singular values, with a sign
/// convention (largest-magnitude entry positive) so results are reproducible.
pub(crate) fn thin_left_singular(a: DMatrix<f64>, n: usize) -> (DMatrix<f64>, DVector<f64>) {
    let svd = crate::linalg::thin_svd(&a);
    let (u, s) = (svd.u, svd.singular_values);
    let mut basis = u.columns(0, n).into_owned();
    for mut col in basis.column_iter_mut() {
        let pivot = col.iamax();
        if col[pivot] < 0.0 {
            col.neg_mut();
        }
    }
    (basis, s.rows(0, n).into_owned())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn symmetric_pair_gives_single_component_along_v() {
        let v = DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0]);
        let samples = DMatrix::from_columns(&[v.clone(), -v.clone()]);
        let model = pca_from_samples(&samples, 1).unwrap();
        assert!(model.mean().norm() < 1e-15);
        let dir = model.basis().column(0);
        let cos = dir.dot(&v) / v.norm();
        assert!((cos.abs() - 1.0).abs() < 1e-12);
        // variance of {v, -v} with M-1 = 1
        assert!((model.eigenvalues()[0] - 2.0 * v.norm_squared()).abs() < 1e-10);
    }

    #[test]
    fn plane_data_has_two_nonzero_eigenvalues() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let origin = random_matrix(10, 1, 1).column(0).into_owned();
        let a = random_matrix(10, 1, 2).column(0).into_owned();
        let b = random_matrix(10, 1, 5).column(0).into_owned();
        let cols: Vec<DVector<f64>> = (0..8)
            .map(|_| &origin + &a * rng.random_range(-2.0..2.0) + &b * rng.random_range(-2.0..2.0))
            .collect();
        let samples = DMatrix::from_columns(&cols);
        let model = pca_from_samples(&samples, 7).unwrap();
        let ev = model.eigenvalues();
        assert!(ev[0] > 1e-3 && ev[1] > 1e-3);
        assert!(ev.iter().skip(2).all(|&e| e < 1e-10));

        // independent oracle: singular values of the centred data via nalgebra's plain SVD
        let mean = samples.column_mean();
        let centred = DMatrix::from_fn(10, 8, |i, j| samples[(i, j)] - mean[i]);
        let sv = centred.singular_values();
        let rank = sv.iter().filter(|&&s| s > 1e-8).count();
        assert_eq!(rank, 2);
    }

    #[test]
    fn full_rank_reconstruction() {
        let samples = random_matrix(12, 5, 9);
        let model = pca_from_samples(&samples, 4).unwrap();
        for col in samples.column_iter() {
            let col = col.into_owned();
            let w = model.project(&col).unwrap();
            let rec = model.instance(&w).unwrap();
            assert!((rec - &col).norm() / col.norm() < 1e-8);
        }
        assert!(orthonormality_error(model.basis()) < 1e-10);
    }

    #[test]
    fn tall_data_uses_same_subspace_as_direct_svd() {
        let samples = random_matrix(300, 6, 4);
        let model = pca_from_samples(&samples, 3).unwrap();
        let mean = samples.column_mean();
        let centred = DMatrix::from_fn(300, 6, |i, j| samples[(i, j)] - mean[i]);
        let svd = centred.svd(true, false);
        let u = svd.u.unwrap();
        for k in 0..3 {
            let c = u.column(k).dot(&model.basis().column(k));
            assert!((c.abs() - 1.0).abs() < 1e-10);
            let ev = svd.singular_values[k].powi(2) / 5.0;
            assert!((ev - model.eigenvalues()[k]).abs() < 1e-10 * ev.max(1.0));
        }
    }

    #[test]
    fn n_keep_bounds() {
        let samples = random_matrix(5, 4, 1);
        assert!(pca_from_samples(&samples, 4).is_err());
        assert!(pca_from_samples(&samples, 0).is_err());
        assert!(pca_from_samples(&random_matrix(5, 1, 1), 1).is_err());
    }

    #[test]
    fn rejects_non_orthonormal_basis() {
        let basis = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        let r = PcaModel::new(DVector::zeros(2), basis, DVector::from_vec(vec![2.0, 1.0]));
        assert!(r.is_err());
    }

    #[test]
    fn rejects_increasing_eigenvalues() {
        let r = PcaModel::new(
            DVector::zeros(2),
            DMatrix::identity(2, 2),
            DVector::from_vec(vec![1.0, 2.0]),
        );
        assert!(r.is_err());
    }
}
