//! Advection-diffusion in a Taylor–Green vortex:
//! `c_t - mu lap c + beta . grad c = 0` on `(-1, 1)^2`, zero Dirichlet data on
//! the bottom edge and homogeneous Neumann data elsewhere.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::trajectory::{BasisTag, SpaceTimeTrajectory};
use super::wendland::wendland_2_1;
use super::{ModelError, ParameterBox};
use crate::fem2d::{build_mesh, Assembler, BoundarySide, CartesianMesh, CrankNicolson, DofMap, SparseOperator, TimeGrid};

/// Regularization added to the gradient inner product so that it is
/// definite on the free DOFs.
pub const GRADIENT_REGULARIZATION: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaylorGreenConfig {
    /// `[x0, x1, y0, y1]`
    pub bounds: [f64; 4],
    pub nx: usize,
    pub ny: usize,
    pub degree: usize,
    pub t_end: f64,
    pub dt: f64,
    pub bump_radius: f64,
    pub bump_centers: Vec<[f64; 2]>,
    pub dirichlet: Vec<BoundarySide>,
    /// Drop the advection term (diagnostics only).
    pub disable_advection: bool,
}

impl Default for TaylorGreenConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl TaylorGreenConfig {
    /// Desk-scale resolution: `h = 0.1`, biquadratic elements, `dt = 0.025`.
    pub fn desk() -> Self {
        Self {
            bounds: [-1.0, 1.0, -1.0, 1.0],
            nx: 20,
            ny: 20,
            degree: 2,
            t_end: 2.5,
            dt: 0.025,
            bump_radius: 0.4,
            bump_centers: vec![[-0.6, -0.6], [0.0, 0.0], [0.6, 0.6]],
            dirichlet: vec![BoundarySide::Bottom],
            disable_advection: false,
        }
    }

    /// Published resolution: `h = 0.04` (10,100 free DOFs), `dt = 0.01`.
    pub fn reference() -> Self {
        Self { nx: 50, ny: 50, dt: 0.01, ..Self::desk() }
    }

    /// Admissible inverse Péclet numbers.
    pub fn parameter_box() -> ParameterBox {
        ParameterBox { min: vec![1.0 / 50.0], max: vec![1.0 / 10.0] }
    }

    pub fn from_toml(text: &str) -> Result<Self, ModelError> {
        toml::from_str(text).map_err(|e| ModelError::Config(e.to_string()))
    }

    pub fn time_grid(&self) -> Result<TimeGrid, ModelError> {
        Ok(TimeGrid::new(self.t_end, self.dt)?)
    }
}

/// `beta(x) = (sin(pi x) cos(pi y), -cos(pi x) sin(pi y))`.
pub fn taylor_green_velocity(x: [f64; 2]) -> [f64; 2] {
    let (sx, cx) = (PI * x[0]).sin_cos();
    let (sy, cy) = (PI * x[1]).sin_cos();
    [sx * cy, -cx * sy]
}

/// Assembled full-order operators on the free DOFs.
#[derive(Debug, Clone)]
pub struct TaylorGreenModel {
    pub config: TaylorGreenConfig,
    pub mesh: CartesianMesh,
    pub dofs: DofMap,
    pub grid: TimeGrid,
    pub mass: SparseOperator,
    pub stiffness: SparseOperator,
    pub advection: SparseOperator,
    /// Initial condition on the free DOFs (nodal interpolant).
    pub initial: Vec<f64>,
}

impl TaylorGreenModel {
    pub fn new(config: TaylorGreenConfig) -> Result<Self, ModelError> {
        let (mesh, dofs) = build_mesh(config.bounds, config.nx, config.ny, config.degree, &config.dirichlet)?;
        let grid = config.time_grid()?;
        let asm = Assembler::new(&mesh);
        let free = dofs.free_nodes();
        let mass = asm.mass(&mesh).submatrix(free, free);
        let stiffness = asm.stiffness(&mesh, |_| 1.0).submatrix(free, free);
        let advection = if config.disable_advection {
            asm.advection(&mesh, |_| [0.0, 0.0])
        } else {
            asm.advection(&mesh, |p| taylor_green_velocity(p.x))
        }
        .submatrix(free, free);
        let nodal = mesh.interpolate(|p| {
            config.bump_centers.iter().map(|c| wendland_2_1(config.bump_radius, *c, p)).sum()
        });
        let initial = dofs.restrict_vec(&nodal);
        Ok(Self { config, mesh, dofs, grid, mass, stiffness, advection, initial })
    }

    pub fn num_dofs(&self) -> usize {
        self.dofs.num_free()
    }

    /// `A + mu K`.
    pub fn operator(&self, mu: f64) -> SparseOperator {
        SparseOperator::linear_combination(&[(1.0, &self.advection), (mu, &self.stiffness)])
    }

    /// Full-order Crank–Nicolson trajectory for `mu > 0`.
    pub fn solve(&self, mu: f64) -> Result<SpaceTimeTrajectory, ModelError> {
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(ModelError::InvalidParameter(format!("inverse Péclet number must be positive, got {mu}")));
        }
        let cn = CrankNicolson::new(&self.mass, &self.operator(mu), self.grid.dt)?;
        let states = cn.march(&self.initial, self.grid.nt, None);
        Ok(SpaceTimeTrajectory::from_states(&states, self.grid, BasisTag::FullOrder))
    }

    /// Gradient inner product `K + 1e-12 M` used for basis construction.
    pub fn gradient_inner_product(&self) -> SparseOperator {
        SparseOperator::linear_combination(&[(1.0, &self.stiffness), (GRADIENT_REGULARIZATION, &self.mass)])
    }

    /// `H^1` inner product `M + K` used for error reporting.
    pub fn h1_inner_product(&self) -> SparseOperator {
        SparseOperator::linear_combination(&[(1.0, &self.mass), (1.0, &self.stiffness)])
    }

    /// Nodal values (Dirichlet nodes included) of a free-DOF vector.
    pub fn nodal(&self, free: &[f64]) -> Vec<f64> {
        self.dofs.extend_vec(free, 0.0)
    }
}

/// Convenience wrapper: builds the model and solves once.
pub fn taylor_green_forward(mu: f64, config: &TaylorGreenConfig) -> Result<SpaceTimeTrajectory, ModelError> {
    TaylorGreenModel::new(config.clone())?.solve(mu)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn coarse() -> TaylorGreenConfig {
        TaylorGreenConfig { nx: 8, ny: 8, t_end: 0.5, dt: 0.05, ..TaylorGreenConfig::desk() }
    }

    #[test]
    fn paper_resolution_has_published_dof_count() {
        let c = TaylorGreenConfig::reference();
        let (_, dofs) = build_mesh(c.bounds, c.nx, c.ny, c.degree, &c.dirichlet).unwrap();
        assert_eq!(dofs.num_free(), 10_100);
    }

    #[test]
    fn velocity_is_divergence_free_and_tangential() {
        let h = 1e-6;
        for &p in &[[0.3, -0.2], [0.77, 0.1], [-0.5, 0.9]] {
            let dx = (taylor_green_velocity([p[0] + h, p[1]])[0] - taylor_green_velocity([p[0] - h, p[1]])[0]) / (2.0 * h);
            let dy = (taylor_green_velocity([p[0], p[1] + h])[1] - taylor_green_velocity([p[0], p[1] - h])[1]) / (2.0 * h);
            assert!((dx + dy).abs() < 1e-8);
        }
        assert!(taylor_green_velocity([1.0, 0.3])[0].abs() < 1e-15);
        assert!(taylor_green_velocity([0.3, -1.0])[1].abs() < 1e-15);
    }

    #[test]
    fn initial_condition_peaks_at_bump_centres() {
        let m = TaylorGreenModel::new(coarse()).unwrap();
        let nodal = m.nodal(&m.initial);
        assert!((m.mesh.evaluate(&nodal, [0.0, 0.0]).unwrap() - 1.0).abs() < 1e-12);
        let t = m.solve(0.05).unwrap();
        assert_eq!(t.state(0).as_slice(), m.initial.as_slice());
        assert_eq!(t.num_levels(), 11);
    }

    #[test]
    fn pure_diffusion_decays() {
        let cfg = TaylorGreenConfig { disable_advection: true, t_end: 10.0, dt: 0.05, ..coarse() };
        let m = TaylorGreenModel::new(cfg).unwrap();
        let t = m.solve(0.5).unwrap();
        let h1 = m.h1_inner_product();
        let e0 = h1.inner(&m.initial, &m.initial);
        let last = t.state(t.num_levels() - 1).clone_owned();
        let e1 = h1.inner(last.as_slice(), last.as_slice());
        // Slowest mode decays like exp(-mu (pi/4)^2 t).
        assert!(e1 < 1e-2 * e0, "{e1} vs {e0}");
    }

    #[test]
    fn solve_is_deterministic() {
        let m = TaylorGreenModel::new(coarse()).unwrap();
        assert_eq!(m.solve(0.03).unwrap(), m.solve(0.03).unwrap());
        assert!(m.solve(-1.0).is_err());
    }

    #[test]
    fn toml_overrides_defaults() {
        let c = TaylorGreenConfig::from_toml("nx = 10\nny = 10\ndt = 0.05").unwrap();
        assert_eq!(c.nx, 10);
        assert_eq!(c.degree, 2);
        assert!(TaylorGreenConfig::from_toml("bogus = 1").is_err());
    }
}
