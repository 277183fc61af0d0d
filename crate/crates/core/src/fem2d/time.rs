//! Uniform time grids and the Crank–Nicolson scheme.

use serde::{Deserialize, Serialize};

use super::banded::BandedLu;
use super::sparse::SparseOperator;
use super::FemError;

/// Uniform grid `t_n = n dt`, `n = 0..=nt`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t_end: f64,
    pub dt: f64,
    pub nt: usize,
}

impl TimeGrid {
    /// Grid with step `dt` reaching `t_end`; `t_end / dt` must be an integer
    /// up to a relative tolerance of 1e-12.
    pub fn new(t_end: f64, dt: f64) -> Result<Self, FemError> {
        if !(t_end > 0.0 && dt > 0.0 && t_end.is_finite() && dt.is_finite()) {
            return Err(FemError::TimeGrid(format!("need t_end > 0 and dt > 0, got t_end={t_end}, dt={dt}")));
        }
        let nt = (t_end / dt).round() as usize;
        if nt == 0 || ((nt as f64) * dt - t_end).abs() > 1e-12 * t_end {
            return Err(FemError::TimeGrid(format!("t_end={t_end} is not a multiple of dt={dt}")));
        }
        Ok(Self { t_end, dt, nt })
    }

    /// Grid of `nt` steps on `[0, t_end]`.
    pub fn with_steps(t_end: f64, nt: usize) -> Result<Self, FemError> {
        if nt == 0 {
            return Err(FemError::TimeGrid("need at least one time step".into()));
        }
        Self::new(t_end, t_end / nt as f64)
    }

    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.nt).map(|n| self.time(n)).collect()
    }

    /// Same horizon with half the step.
    pub fn refined(&self) -> Self {
        Self { t_end: self.t_end, dt: 0.5 * self.dt, nt: 2 * self.nt }
    }
}

/// Crank–Nicolson stepper for `M c' + L c = f` with a time-independent `L`.
/// The implicit matrix `M + dt/2 L` is factored once at construction.
#[derive(Debug, Clone)]
pub struct CrankNicolson {
    lu: BandedLu,
    explicit: SparseOperator,
}

impl CrankNicolson {
    pub fn new(mass: &SparseOperator, op: &SparseOperator, dt: f64) -> Result<Self, FemError> {
        let implicit = SparseOperator::linear_combination(&[(1.0, mass), (0.5 * dt, op)]);
        let explicit = SparseOperator::linear_combination(&[(1.0, mass), (-0.5 * dt, op)]);
        let lu = BandedLu::factor(&implicit).map_err(|e| match e {
            FemError::Factorization { pivot, .. } => {
                FemError::Factorization { pivot, context: "Crank-Nicolson system matrix M + dt/2 L".into() }
            }
            other => other,
        })?;
        Ok(Self { lu, explicit })
    }

    /// One step: solves `(M + dt/2 L) c_next = (M - dt/2 L) c_prev + source`.
    /// `source` already carries the `dt` factor.
    pub fn advance(&self, c_prev: &[f64], source: Option<&[f64]>) -> Vec<f64> {
        let mut rhs = self.explicit.mul_vec(c_prev);
        if let Some(s) = source {
            for (r, v) in rhs.iter_mut().zip(s) {
                *r += v;
            }
        }
        self.lu.solve_in_place(&mut rhs);
        rhs
    }

    /// Marches `nt` steps from `c0` with a constant source; returns all
    /// `nt + 1` states.
    pub fn march(&self, c0: &[f64], nt: usize, source: Option<&[f64]>) -> Vec<Vec<f64>> {
        let mut states = Vec::with_capacity(nt + 1);
        states.push(c0.to_vec());
        for n in 0..nt {
            let next = self.advance(&states[n], source);
            states.push(next);
        }
        states
    }
}

/// Single Crank–Nicolson step with a fresh factorization. Use
/// [`CrankNicolson`] when stepping repeatedly with the same operator.
pub fn crank_nicolson_advance(
    mass: &SparseOperator,
    op: &SparseOperator,
    c_prev: &[f64],
    dt: f64,
    source: Option<&[f64]>,
) -> Result<Vec<f64>, FemError> {
    Ok(CrankNicolson::new(mass, op, dt)?.advance(c_prev, source))
}
