//! Empirical moments of the reduced-model measurement bias.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{EnkmError, ForwardResponse};

/// Mean `delta` and `1/S` covariance `Gamma` of `G_h(mu_s) - G_eps(mu_s)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasMoments {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub samples: usize,
}

impl BiasMoments {
    pub fn zero(nm: usize) -> Self {
        Self { mean: DVector::zeros(nm), covariance: DMatrix::zeros(nm, nm), samples: 0 }
    }

    /// Moments of the given bias samples; fails if the covariance has an
    /// eigenvalue below `-1e-10 trace`.
    pub fn from_biases(biases: &[DVector<f64>]) -> Result<Self, EnkmError> {
        let s = biases.len();
        if s < 2 {
            return Err(EnkmError::InvalidInput(format!("need at least 2 bias samples, got {s}")));
        }
        let nm = biases[0].len();
        if biases.iter().any(|b| b.len() != nm) {
            return Err(EnkmError::InvalidInput("bias samples differ in length".into()));
        }
        let mut mean = DVector::zeros(nm);
        for b in biases {
            mean += b;
        }
        mean /= s as f64;
        let centred = DMatrix::from_fn(nm, s, |i, k| biases[k][i] - mean[i]);
        let covariance = &centred * centred.transpose() / s as f64;
        let trace = covariance.trace();
        if trace > 0.0 {
            let min = covariance.clone().symmetric_eigenvalues().min();
            if min < -1e-10 * trace {
                return Err(EnkmError::IndefiniteBias { min_eigenvalue: min });
            }
        }
        Ok(Self { mean, covariance, samples: s })
    }
}

/// Bias samples `G_h(mu_s) - G_eps(mu_s)`, with full-order responses
/// supplied when they are already known (e.g. from snapshot generation).
pub fn estimate_bias_moments(
    params: &[Vec<f64>],
    full: Option<&[DVector<f64>]>,
    fom: &dyn ForwardResponse,
    rom: &dyn ForwardResponse,
) -> Result<BiasMoments, EnkmError> {
    if let Some(f) = full {
        if f.len() != params.len() {
            return Err(EnkmError::InvalidInput(format!("{} parameters vs {} full responses", params.len(), f.len())));
        }
    }
    let biases: Vec<Result<DVector<f64>, String>> = params
        .par_iter()
        .enumerate()
        .map(|(s, mu)| {
            let g = match full {
                Some(f) => f[s].clone(),
                None => fom.respond(mu)?,
            };
            Ok(g - rom.respond(mu)?)
        })
        .collect();
    let biases = biases.into_iter().collect::<Result<Vec<_>, _>>().map_err(EnkmError::InvalidInput)?;
    BiasMoments::from_biases(&biases)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::enkm::FnResponse;

    #[test]
    fn hand_example() {
        let b = BiasMoments::from_biases(&[DVector::from_vec(vec![1.0, 0.0]), DVector::from_vec(vec![3.0, 2.0])]).unwrap();
        assert_eq!(b.mean.as_slice(), &[2.0, 1.0]);
        assert_eq!(b.covariance, DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]));
        assert_eq!(b.samples, 2);
    }

    #[test]
    fn identical_models_have_zero_bias() {
        let g = FnResponse { measurements: 2, parameters: 1, f: |mu: &[f64]| Ok(DVector::from_vec(vec![mu[0], mu[0].powi(2)])) };
        let params: Vec<Vec<f64>> = (0..5).map(|s| vec![s as f64]).collect();
        let b = estimate_bias_moments(&params, None, &g, &g).unwrap();
        assert_eq!(b.mean.amax(), 0.0);
        assert_eq!(b.covariance.amax(), 0.0);
    }

    #[test]
    fn precomputed_full_responses_are_used() {
        let rom = FnResponse { measurements: 1, parameters: 1, f: |_: &[f64]| Ok(DVector::from_vec(vec![0.0])) };
        let full = vec![DVector::from_vec(vec![1.0]), DVector::from_vec(vec![3.0])];
        let b = estimate_bias_moments(&[vec![0.0], vec![1.0]], Some(&full), &rom, &rom).unwrap();
        assert_eq!(b.mean[0], 2.0);
        assert_eq!(b.covariance[(0, 0)], 1.0);
    }
}
