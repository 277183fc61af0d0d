//! Galerkin-reduced Taylor–Green model.

use nalgebra::{DMatrix, DVector};

use super::greedy::ReducedSolverFactory;
use super::{InnerProduct, RomError};
use crate::fem2d::TimeGrid;
use crate::models::TaylorGreenModel;

/// Dense reduced operators `Psi^T M Psi`, `Psi^T K Psi`, `Psi^T A Psi` and
/// the projected initial condition.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedTaylorGreen {
    pub mass: DMatrix<f64>,
    pub stiffness: DMatrix<f64>,
    pub advection: DMatrix<f64>,
    pub initial: DVector<f64>,
    pub grid: TimeGrid,
}

/// Projects the full-order operators onto `basis` (free DOFs x N). The
/// initial condition is projected orthogonally in `x`, in which the basis
/// is assumed orthonormal.
pub fn project_taylor_green(basis: &DMatrix<f64>, model: &TaylorGreenModel, x: &InnerProduct) -> ReducedTaylorGreen {
    let c0 = DVector::from_vec(x.op.mul_vec(&model.initial));
    ReducedTaylorGreen {
        mass: model.mass.project(basis),
        stiffness: model.stiffness.project(basis),
        advection: model.advection.project(basis),
        initial: basis.transpose() * c0,
        grid: model.grid,
    }
}

impl ReducedTaylorGreen {
    pub fn len(&self) -> usize {
        self.initial.len()
    }

    pub fn is_empty(&self) -> bool {
        self.initial.is_empty()
    }

    /// Model on the leading `n` basis functions.
    pub fn truncated(&self, n: usize) -> Self {
        let n = n.min(self.len());
        Self {
            mass: self.mass.view((0, 0), (n, n)).into_owned(),
            stiffness: self.stiffness.view((0, 0), (n, n)).into_owned(),
            advection: self.advection.view((0, 0), (n, n)).into_owned(),
            initial: self.initial.rows(0, n).into_owned(),
            grid: self.grid,
        }
    }

    /// Crank–Nicolson trajectory (N x levels): one dense factorization,
    /// then one propagator multiply per step.
    pub fn solve(&self, mu: f64) -> Result<DMatrix<f64>, RomError> {
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(RomError::Solve(format!("inverse Péclet number must be positive, got {mu}")));
        }
        let half = 0.5 * self.grid.dt;
        let op = &self.advection + &self.stiffness * mu;
        let lhs = &self.mass + &op * half;
        let rhs = &self.mass - &op * half;
        let lu = lhs.lu();
        let step = lu
            .solve(&rhs)
            .ok_or_else(|| RomError::Solve(format!("singular reduced Crank–Nicolson matrix at mu = {mu}")))?;
        let levels = self.grid.nt + 1;
        let mut traj = DMatrix::zeros(self.len(), levels);
        traj.set_column(0, &self.initial);
        for n in 1..levels {
            let next = &step * traj.column(n - 1);
            traj.set_column(n, &next);
        }
        Ok(traj)
    }
}

/// Greedy driver: projects the model onto each candidate basis and solves
/// the reduced problem for every training parameter.
pub struct TaylorGreenReducer<'a> {
    pub model: &'a TaylorGreenModel,
    pub inner: &'a InnerProduct,
}

impl ReducedSolverFactory for TaylorGreenReducer<'_> {
    fn reduced_trajectories(&self, basis: &DMatrix<f64>, params: &[Vec<f64>]) -> Result<Vec<DMatrix<f64>>, RomError> {
        let rom = project_taylor_green(basis, self.model, self.inner);
        params.iter().map(|mu| rom.solve(mu[0])).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::TaylorGreenConfig;
    use crate::rom::InnerProductTag;

    fn coarse() -> TaylorGreenModel {
        TaylorGreenModel::new(TaylorGreenConfig { nx: 4, ny: 4, t_end: 0.5, dt: 0.05, ..TaylorGreenConfig::desk() }).unwrap()
    }

    fn inner(m: &TaylorGreenModel) -> InnerProduct {
        InnerProduct::new(InnerProductTag::H1Seminorm, m.gradient_inner_product())
    }

    #[test]
    fn identity_basis_reproduces_full_order() {
        let m = coarse();
        let n = m.num_dofs();
        // The identity is orthonormal in the Euclidean product.
        let x = InnerProduct::new(InnerProductTag::L2, crate::fem2d::SparseOperator::identity(n));
        let rom = project_taylor_green(&DMatrix::identity(n, n), &m, &x);
        let red = rom.solve(0.05).unwrap();
        let full = m.solve(0.05).unwrap();
        assert!((red - &full.coefficients).amax() < 1e-10);
    }

    #[test]
    fn single_mode_is_scalar_recursion() {
        let m = coarse();
        let x = inner(&m);
        let nc0 = x.norm(&m.initial);
        let psi = DMatrix::from_column_slice(m.num_dofs(), 1, &m.initial) / nc0;
        let rom = project_taylor_green(&psi, &m, &x);
        let mu = 0.07;
        let (ms, ks, as_) = (rom.mass[(0, 0)], rom.stiffness[(0, 0)], rom.advection[(0, 0)]);
        let l = as_ + mu * ks;
        let dt = m.grid.dt;
        let factor = (ms - 0.5 * dt * l) / (ms + 0.5 * dt * l);
        let traj = rom.solve(mu).unwrap();
        assert!((rom.initial[0] - nc0).abs() < 1e-10 * nc0);
        let mut c = rom.initial[0];
        for n in 1..traj.ncols() {
            c *= factor;
            assert!((traj[(0, n)] - c).abs() < 1e-12 * nc0);
        }
    }

    #[test]
    fn no_operators_gives_constant_trajectory() {
        let m = coarse();
        let x = inner(&m);
        let psi = DMatrix::from_column_slice(m.num_dofs(), 1, &m.initial) / x.norm(&m.initial);
        let mut rom = project_taylor_green(&psi, &m, &x);
        rom.stiffness.fill(0.0);
        rom.advection.fill(0.0);
        let traj = rom.solve(0.05).unwrap();
        for n in 0..traj.ncols() {
            assert_eq!(traj[(0, n)], rom.initial[0]);
        }
    }

    #[test]
    fn reduced_mass_conditioning_is_interlaced() {
        let m = coarse();
        let x = InnerProduct::new(InnerProductTag::L2, m.mass.clone());
        let mut psi = DMatrix::from_fn(m.num_dofs(), 4, |i, j| ((i * (j + 3)) as f64 * 0.37).sin() + if i == j { 1.0 } else { 0.0 });
        crate::rom::pod::orthonormalize(&mut psi, &InnerProduct::new(InnerProductTag::L2, crate::fem2d::SparseOperator::identity(m.num_dofs())), 0);
        let rom = project_taylor_green(&psi, &m, &x);
        let cond = |a: &DMatrix<f64>| {
            let e = a.clone().symmetric_eigenvalues();
            e.max() / e.min()
        };
        assert!(rom.mass.clone().symmetric_eigenvalues().min() > 0.0);
        assert!(cond(&rom.mass) <= cond(&m.mass.to_dense()) * (1.0 + 1e-10));
    }

    #[test]
    fn truncation_is_leading_block() {
        let m = coarse();
        let x = inner(&m);
        let psi = DMatrix::from_fn(m.num_dofs(), 3, |i, j| ((i + 1) as f64).powi(j as i32 + 1) * 1e-3);
        let rom = project_taylor_green(&psi, &m, &x);
        let small = project_taylor_green(&psi.columns(0, 2).into_owned(), &m, &x);
        assert!((rom.truncated(2).mass - small.mass).amax() < 1e-14);
        assert!((rom.truncated(2).initial - small.initial).amax() < 1e-12);
    }
}
