//! Gaussian measurement noise.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

use super::ObserveError;

/// Zero-mean Gaussian noise with covariance `Sigma = L L^T`.
#[derive(Debug, Clone)]
pub struct NoiseModel {
    pub covariance: DMatrix<f64>,
    /// Lower-triangular factor.
    pub factor: DMatrix<f64>,
}

impl NoiseModel {
    /// General SPD covariance.
    pub fn new(covariance: DMatrix<f64>) -> Result<Self, ObserveError> {
        if !covariance.is_square() || (&covariance - covariance.transpose()).amax() > 1e-12 * covariance.amax() {
            return Err(ObserveError::NotPositiveDefinite);
        }
        let ch = Cholesky::<f64, Dyn>::new(covariance.clone()).ok_or(ObserveError::NotPositiveDefinite)?;
        Ok(Self { factor: ch.l(), covariance })
    }

    /// `sigma^2 I`; `sigma = 0` gives a degenerate model that draws zeros.
    pub fn isotropic(sigma: f64, dim: usize) -> Result<Self, ObserveError> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(ObserveError::InvalidConfig(format!("noise level must be non-negative, got {sigma}")));
        }
        Ok(Self {
            covariance: DMatrix::from_diagonal_element(dim, dim, sigma * sigma),
            factor: DMatrix::from_diagonal_element(dim, dim, sigma),
        })
    }

    pub fn dim(&self) -> usize {
        self.covariance.nrows()
    }

    pub fn sample(&self, rng: &mut impl Rng) -> DVector<f64> {
        let z = DVector::from_fn(self.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
        &self.factor * z
    }

    /// `L^{-1} v`, so that `|whiten(v)|` is the `Sigma^{-1}` norm of `v`.
    pub fn whiten(&self, v: &DVector<f64>) -> Result<DVector<f64>, ObserveError> {
        self.factor.solve_lower_triangular(v).ok_or(ObserveError::NotPositiveDefinite)
    }

    pub fn weighted_norm(&self, v: &DVector<f64>) -> Result<f64, ObserveError> {
        Ok(self.whiten(v)?.norm())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding::stream;

    #[test]
    fn sample_covariance_converges() {
        let cov = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let noise = NoiseModel::new(cov.clone()).unwrap();
        let mut rng = stream(3, &[]);
        let n = 100_000;
        let mut acc = DMatrix::zeros(2, 2);
        for _ in 0..n {
            let e = noise.sample(&mut rng);
            acc += &e * e.transpose();
        }
        acc /= n as f64;
        // 3 sigma^2 / sqrt(n) with sigma^2 = 2.
        assert!((acc - cov).amax() < 3.0 * 2.0 / (n as f64).sqrt());
    }

    #[test]
    fn whitened_norm_has_mean_dimension() {
        let noise = NoiseModel::isotropic(0.3, 20).unwrap();
        let mut rng = stream(5, &[1]);
        let n = 5000;
        let mean: f64 = (0..n).map(|_| noise.weighted_norm(&noise.sample(&mut rng)).unwrap().powi(2)).sum::<f64>() / n as f64;
        assert!((mean - 20.0).abs() < 0.05 * 20.0);
    }

    #[test]
    fn rejects_indefinite() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(NoiseModel::new(cov).is_err());
        assert!(NoiseModel::isotropic(-1.0, 2).is_err());
    }

    #[test]
    fn zero_noise_draws_zeros() {
        let noise = NoiseModel::isotropic(0.0, 4).unwrap();
        assert_eq!(noise.sample(&mut stream(1, &[])).amax(), 0.0);
    }
}
