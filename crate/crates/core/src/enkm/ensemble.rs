//! Prior sampling and ensemble bookkeeping.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::EnkmError;
use crate::seeding::{stream, ALGORITHM_STREAM};

/// Product of independent uniform distributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl PriorSpec {
    /// Bounds with `min <= max`; equal bounds give a point mass.
    pub fn new(min: Vec<f64>, max: Vec<f64>) -> Result<Self, EnkmError> {
        if min.len() != max.len() || min.is_empty() || min.iter().zip(&max).any(|(a, b)| !(a <= b)) {
            return Err(EnkmError::InvalidInput(format!("bad prior bounds {min:?} / {max:?}")));
        }
        Ok(Self { min, max })
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }
}

/// `J x Np` particle matrix (one particle per row).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub particles: DMatrix<f64>,
    pub iteration: usize,
    pub prior: PriorSpec,
    pub seed: u64,
}

impl Ensemble {
    pub fn size(&self) -> usize {
        self.particles.nrows()
    }

    pub fn dim(&self) -> usize {
        self.particles.ncols()
    }

    pub fn particle(&self, j: usize) -> Vec<f64> {
        self.particles.row(j).iter().cloned().collect()
    }

    pub fn mean(&self) -> Vec<f64> {
        self.particles.row_mean().iter().cloned().collect()
    }

    /// Componentwise standard deviation with `1/J` normalization.
    pub fn std(&self) -> Vec<f64> {
        self.particles.row_variance().iter().map(|v| v.sqrt()).collect()
    }
}

/// `J` i.i.d. draws from the prior on the algorithm stream of `seed`.
pub fn init_ensemble(prior: &PriorSpec, j: usize, seed: u64) -> Result<Ensemble, EnkmError> {
    if j < 2 {
        return Err(EnkmError::InvalidInput(format!("ensemble size must be at least 2, got {j}")));
    }
    let mut rng = stream(seed, &[ALGORITHM_STREAM, 0]);
    let mut particles = DMatrix::zeros(j, prior.dim());
    for p in 0..j {
        for (k, (a, b)) in prior.min.iter().zip(&prior.max).enumerate() {
            particles[(p, k)] = a + (b - a) * rng.random::<f64>();
        }
    }
    Ok(Ensemble { particles, iteration: 0, prior: prior.clone(), seed })
}

/// Relative size of the part of `current - mean(initial)` orthogonal to
/// the span of the centred initial particles (max over particles).
pub fn span_residual(initial: &DMatrix<f64>, current: &DMatrix<f64>) -> f64 {
    let mean = initial.row_mean();
    let centred = DMatrix::from_fn(initial.nrows(), initial.ncols(), |j, k| initial[(j, k)] - mean[k]);
    // Orthonormal basis of the row space: two-pass Gram–Schmidt, dropping
    // dependent directions (centred rows always have one).
    let scale = (0..centred.nrows()).map(|j| centred.row(j).norm()).fold(0.0, f64::max);
    let mut cols: Vec<DVector<f64>> = Vec::new();
    for j in 0..centred.nrows() {
        let mut c = centred.row(j).transpose();
        for _ in 0..2 {
            for b in &cols {
                c -= b * b.dot(&c);
            }
        }
        let n = c.norm();
        if n > 1e-10 * scale {
            cols.push(c / n);
        }
    }
    let basis = if cols.is_empty() { DMatrix::zeros(initial.ncols(), 0) } else { DMatrix::from_columns(&cols) };
    let mut worst: f64 = 0.0;
    for j in 0..current.nrows() {
        let v = (current.row(j) - &mean).transpose();
        let resid = &v - &basis * (basis.transpose() * &v);
        let scale = v.norm().max(mean.norm()).max(f64::MIN_POSITIVE);
        worst = worst.max(resid.norm() / scale);
    }
    worst
}
