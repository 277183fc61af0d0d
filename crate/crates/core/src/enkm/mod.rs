//! Ensemble Kalman inversion: full-order, biased reduced and bias-adjusted
//! reduced variants.

pub mod bias;
pub mod ensemble;
pub mod kalman;
pub mod run;

pub use bias::{estimate_bias_moments, BiasMoments};
pub use ensemble::{init_ensemble, span_residual, Ensemble, PriorSpec};
pub use kalman::{analysis_update, predict, sample_moments, KalmanStepReport, Moments, Perturbation, Prediction};
pub use run::{
    check_termination, run_inversion, InversionConfig, InversionResult, IterationRecord, StopReason, TerminationPolicy, Variant,
};

use nalgebra::DVector;

use crate::observe::ObserveError;

/// Parameter-to-observable map `G`.
pub trait ForwardResponse: Sync {
    fn num_measurements(&self) -> usize;
    fn num_parameters(&self) -> usize;
    fn respond(&self, mu: &[f64]) -> Result<DVector<f64>, String>;
}

/// Wraps a closure as a forward response.
pub struct FnResponse<F> {
    pub measurements: usize,
    pub parameters: usize,
    pub f: F,
}

impl<F> ForwardResponse for FnResponse<F>
where
    F: Fn(&[f64]) -> Result<DVector<f64>, String> + Sync,
{
    fn num_measurements(&self) -> usize {
        self.measurements
    }

    fn num_parameters(&self) -> usize {
        self.parameters
    }

    fn respond(&self, mu: &[f64]) -> Result<DVector<f64>, String> {
        (self.f)(mu)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EnkmError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("{failed} of {total} forward evaluations failed (limit 10%); first error: {first}")]
    TooManyFailures { failed: usize, total: usize, first: String },
    #[error("gain system is not positive definite even after jitter {jitter:e}")]
    Factorization { jitter: f64 },
    #[error("bias covariance is indefinite: eigenvalue {min_eigenvalue:e} below -1e-10 * trace")]
    IndefiniteBias { min_eigenvalue: f64 },
    #[error(transparent)]
    Observe(#[from] ObserveError),
    #[error("inversion aborted at iteration {iteration}: {reason}")]
    Aborted { iteration: usize, reason: String, partial: Box<InversionResult> },
    #[error("i/o: {0}")]
    Io(String),
}
