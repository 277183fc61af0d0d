//! Measurement operators, noise and synthetic observations.

pub mod noise;
pub mod operator;

pub use noise::NoiseModel;
pub use operator::{MeasurementMode, MeasurementOperator, PointwiseSensors, RieszSensors, SensorLayout};

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::seeding::{stream, DATA_STREAM};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ObserveError {
    #[error("invalid measurement configuration: {0}")]
    InvalidConfig(String),
    #[error("sensor point {0:?} lies outside the domain")]
    PointOutside([f64; 2]),
    #[error("trajectory shape {found:?} does not match operator shape {expected:?}")]
    Shape { expected: (usize, usize), found: (usize, usize) },
    #[error("covariance is not symmetric positive definite")]
    NotPositiveDefinite,
    #[error("all measurements vanish; a relative noise level is undefined")]
    ZeroMeasurements,
    #[error("forward model failed: {0}")]
    Forward(String),
    #[error("i/o: {0}")]
    Io(String),
}

/// Synthetic data `y = G(mu*) + eta` with everything needed to replay it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationRecord {
    pub mu_star: Vec<f64>,
    /// Isotropic noise level, when the noise model is `sigma^2 I`.
    pub sigma: Option<f64>,
    pub seed: u64,
    pub clean: Vec<f64>,
    pub noise: Vec<f64>,
    pub data: Vec<f64>,
}

impl ObservationRecord {
    pub fn data(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.data)
    }

    pub fn clean(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.clean)
    }

    pub fn noise(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.noise)
    }

    pub fn save(&self, path: &Path) -> Result<(), ObserveError> {
        let text = serde_json::to_string_pretty(self).map_err(|e| ObserveError::Io(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| ObserveError::Io(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, ObserveError> {
        let text = std::fs::read_to_string(path).map_err(|e| ObserveError::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| ObserveError::Io(e.to_string()))
    }
}

/// Evaluates `forward(mu_star)` and adds one noise draw from the data
/// stream of `seed`.
pub fn synthesize_data<E: std::fmt::Display>(
    forward: impl Fn(&[f64]) -> Result<DVector<f64>, E>,
    mu_star: &[f64],
    noise: &NoiseModel,
    seed: u64,
) -> Result<ObservationRecord, ObserveError> {
    let clean = forward(mu_star).map_err(|e| ObserveError::Forward(e.to_string()))?;
    if clean.len() != noise.dim() {
        return Err(ObserveError::InvalidConfig(format!("{} measurements but noise of dimension {}", clean.len(), noise.dim())));
    }
    let eta = noise.sample(&mut stream(seed, &[DATA_STREAM]));
    let data = &clean + &eta;
    let d = noise.covariance.diagonal();
    let off_diagonal = (&noise.covariance - DMatrix::from_diagonal(&d)).amax();
    let isotropic = off_diagonal == 0.0 && d.iter().all(|v| *v == d[0]);
    Ok(ObservationRecord {
        mu_star: mu_star.to_vec(),
        sigma: isotropic.then(|| d[0].sqrt()),
        seed,
        clean: clean.as_slice().to_vec(),
        noise: eta.as_slice().to_vec(),
        data: data.as_slice().to_vec(),
    })
}

/// `|G(mu*)|_inf`, the scale for relative noise levels.
pub fn relative_noise_scale(clean: &DVector<f64>) -> Result<f64, ObserveError> {
    let s = clean.amax();
    if s == 0.0 || !s.is_finite() {
        return Err(ObserveError::ZeroMeasurements);
    }
    Ok(s)
}
