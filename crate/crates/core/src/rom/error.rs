//! Relative error measures between full-order and reduced trajectories.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::RomError;
use crate::fem2d::SparseOperator;

/// `L^2(I; X)` norm of a trajectory that is piecewise linear in time
/// (columns are time levels). A single column is treated as a stationary
/// field and its plain `X` norm is returned.
pub fn space_time_norm(traj: &DMatrix<f64>, x: &SparseOperator, dt: f64) -> f64 {
    let xc = x.mul_dense(traj);
    if traj.ncols() == 1 {
        return traj.column(0).dot(&xc.column(0)).max(0.0).sqrt();
    }
    let mut s = 0.0;
    for n in 1..traj.ncols() {
        s += traj.column(n - 1).dot(&xc.column(n - 1)) + traj.column(n - 1).dot(&xc.column(n)) + traj.column(n).dot(&xc.column(n));
    }
    (s * dt / 3.0).max(0.0).sqrt()
}

/// Per-parameter and maximum relative errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    /// Relative `L^2(I; X)` error (plain `X` error for stationary fields).
    pub space_time: Vec<f64>,
    /// Relative max-norm error over all coefficients and times.
    pub sup: Vec<f64>,
    pub max_space_time: f64,
    pub max_sup: f64,
}

/// Compares full-order trajectories with reconstructed reduced ones on a
/// test set.
pub fn rom_error_report(
    fom: &[DMatrix<f64>],
    rom: &[DMatrix<f64>],
    x: &SparseOperator,
    dt: f64,
) -> Result<ErrorReport, RomError> {
    if fom.len() != rom.len() || fom.is_empty() {
        return Err(RomError::InvalidInput(format!("{} full-order vs {} reduced trajectories", fom.len(), rom.len())));
    }
    let mut space_time = Vec::with_capacity(fom.len());
    let mut sup = Vec::with_capacity(fom.len());
    for (f, r) in fom.iter().zip(rom) {
        if f.shape() != r.shape() {
            return Err(RomError::InvalidInput(format!("shape mismatch {:?} vs {:?}", f.shape(), r.shape())));
        }
        let diff = f - r;
        let nf = space_time_norm(f, x, dt);
        space_time.push(if nf > 0.0 { space_time_norm(&diff, x, dt) / nf } else { 0.0 });
        let mf = f.amax();
        sup.push(if mf > 0.0 { diff.amax() / mf } else { 0.0 });
    }
    let max = |v: &[f64]| v.iter().cloned().fold(0.0, f64::max);
    Ok(ErrorReport { max_space_time: max(&space_time), max_sup: max(&sup), space_time, sup })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_trajectory_norm() {
        // Constant unit vector over t in [0, 1]: L2(I) norm 1.
        let traj = DMatrix::from_element(1, 11, 1.0);
        let n = space_time_norm(&traj, &SparseOperator::identity(1), 0.1);
        assert!((n - 1.0).abs() < 1e-14);
    }

    #[test]
    fn linear_ramp_norm_is_exact() {
        // c(t) = t on [0, 1]: int t^2 = 1/3, exact for piecewise linears.
        let traj = DMatrix::from_fn(1, 5, |_, n| n as f64 * 0.25);
        let n = space_time_norm(&traj, &SparseOperator::identity(1), 0.25);
        assert!((n * n - 1.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn identical_trajectories_have_zero_error() {
        let f = DMatrix::from_fn(3, 4, |i, n| (i + n) as f64);
        let rep = rom_error_report(&[f.clone()], &[f], &SparseOperator::identity(3), 0.1).unwrap();
        assert_eq!(rep.max_space_time, 0.0);
        assert_eq!(rep.max_sup, 0.0);
    }

    #[test]
    fn scaled_trajectory_error() {
        let f = DMatrix::from_fn(3, 4, |i, n| (i + n + 1) as f64);
        let rep = rom_error_report(&[f.clone()], &[&f * 0.9], &SparseOperator::identity(3), 0.1).unwrap();
        assert!((rep.max_space_time - 0.1).abs() < 1e-12);
        assert!((rep.max_sup - 0.1).abs() < 1e-12);
    }
}
