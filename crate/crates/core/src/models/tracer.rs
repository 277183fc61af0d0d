//! Tracer transport in an unconfined aquifer. The hydraulic head solves
//! `div(k u grad u) + f_u = 0` (zero head on the top and bottom walls), and
//! the concentration solves
//! `c_t - div((d_m I + d_l beta beta^T) grad c) + beta . grad c = f_c`
//! with `beta = -k grad u`, homogeneous Neumann data and zero initial state.

use serde::{Deserialize, Serialize};

use super::trajectory::{BasisTag, SpaceTimeTrajectory};
use super::{ModelError, ParameterBox};
use crate::fem2d::{
    assemble_load, build_mesh, newton_solve_quadratic_elliptic, Assembler, BoundarySide, CartesianMesh,
    CrankNicolson, DofMap, NewtonConfig, NewtonSolution, SparseOperator, TimeGrid,
};

/// Axis-aligned region `x0 < x < x1`, `y0 < y < y1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Region {
    pub const fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Self { x0, x1, y0, y1 }
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        self.x0 < p[0] && p[0] < self.x1 && self.y0 < p[1] && p[1] < self.y1
    }
}

/// Gaussian well `coefficient * exp(-|x - center|^2 / (2 variance))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Well {
    pub center: [f64; 2],
    pub coefficient: f64,
}

pub fn gaussian_wells(wells: &[Well], variance: f64, x: [f64; 2]) -> f64 {
    wells
        .iter()
        .map(|w| {
            let d2 = (x[0] - w.center[0]).powi(2) + (x[1] - w.center[1]).powi(2);
            w.coefficient * (-d2 / (2.0 * variance)).exp()
        })
        .sum()
}

pub const WELL_CENTERS: [[f64; 2]; 4] = [[0.15, 0.15], [0.15, 0.85], [0.85, 0.15], [0.85, 0.85]];

/// Reference log-conductivity used to generate synthetic data.
pub const REFERENCE_LOG_CONDUCTIVITY: [f64; 6] = [-0.75, -0.25, -0.5, 1.0, -0.25, 3.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TracerConfig {
    pub nx: usize,
    pub ny: usize,
    pub degree: usize,
    pub t_end: f64,
    pub dt: f64,
    /// Conductivity regions; the first containing region wins.
    pub regions: Vec<Region>,
    /// Tracer injection coefficients, one per well center.
    pub injection: Vec<f64>,
    pub injection_variance: f64,
    /// Pumping coefficients, one per well center.
    pub pumping: Vec<f64>,
    pub pumping_variance: f64,
    pub well_centers: Vec<[f64; 2]>,
    /// Residual dispersion.
    pub d_m: f64,
    /// Flow-dependent dispersion.
    pub d_l: f64,
    pub newton: NewtonConfig,
}

impl Default for TracerConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl TracerConfig {
    /// Desk scale: bilinear elements with `h = 0.025` (aligned with every
    /// region boundary), `dt = 0.02`.
    pub fn desk() -> Self {
        Self {
            nx: 40,
            ny: 40,
            degree: 1,
            t_end: 0.5,
            dt: 0.02,
            regions: vec![
                Region::new(0.60, 1.00, 0.15, 0.30),
                Region::new(0.00, 0.40, 0.10, 0.70),
                Region::new(0.50, 1.00, 0.00, 0.50),
                Region::new(0.40, 1.00, 0.60, 1.00),
                Region::new(0.20, 0.25, 0.00, 0.30),
                Region::new(0.00, 1.00, 0.00, 1.00),
            ],
            injection: vec![10.0, 5.0, 10.0, 5.0],
            injection_variance: 0.005,
            pumping: vec![10.0, 50.0, 150.0, 50.0],
            pumping_variance: 0.02,
            well_centers: WELL_CENTERS.to_vec(),
            d_m: 2.5e-3,
            d_l: 2.5e-3,
            newton: NewtonConfig::default(),
        }
    }

    /// Uniform prior box of the log-conductivities.
    pub fn parameter_box() -> ParameterBox {
        ParameterBox { min: vec![-1.0, -1.0, -1.0, 0.0, -1.0, 2.0], max: vec![0.0, 1.0, 0.0, 2.0, 0.0, 5.0] }
    }

    pub fn from_toml(text: &str) -> Result<Self, ModelError> {
        toml::from_str(text).map_err(|e| ModelError::Config(e.to_string()))
    }

    pub fn time_grid(&self) -> Result<TimeGrid, ModelError> {
        Ok(TimeGrid::new(self.t_end, self.dt)?)
    }

    fn wells(&self, coefficients: &[f64]) -> Result<Vec<Well>, ModelError> {
        if coefficients.len() != self.well_centers.len() {
            return Err(ModelError::Config(format!(
                "{} well coefficients for {} wells",
                coefficients.len(),
                self.well_centers.len()
            )));
        }
        Ok(self.well_centers.iter().zip(coefficients).map(|(c, q)| Well { center: *c, coefficient: *q }).collect())
    }

    /// Index of the first region containing `p`; points on region edges
    /// that no open box contains fall back to the last region.
    pub fn region_of(&self, p: [f64; 2]) -> usize {
        self.regions.iter().position(|r| r.contains(p)).unwrap_or(self.regions.len() - 1)
    }
}

/// Head, velocity and concentration for one parameter.
#[derive(Debug, Clone)]
pub struct TracerSolution {
    pub head: NewtonSolution,
    /// Element-wise velocity `-k grad u` at element centres.
    pub velocity: Vec<[f64; 2]>,
    /// Concentration on all nodes.
    pub concentration: SpaceTimeTrajectory,
}

/// Assembled, parameter-independent parts of the tracer problem.
#[derive(Debug, Clone)]
pub struct TracerModel {
    pub config: TracerConfig,
    pub mesh: CartesianMesh,
    /// Head DOFs: Dirichlet on top and bottom walls.
    pub head_dofs: DofMap,
    pub grid: TimeGrid,
    pub assembler: Assembler,
    /// Region index of each element (by centroid).
    pub element_region: Vec<usize>,
    /// `int f_u zeta_i` on all nodes.
    pub head_load: Vec<f64>,
    /// `int f_c zeta_i` on all nodes.
    pub tracer_load: Vec<f64>,
    /// Concentration mass matrix (all nodes).
    pub mass: SparseOperator,
    /// Concentration stiffness matrix (all nodes).
    pub stiffness: SparseOperator,
}

impl TracerModel {
    pub fn new(config: TracerConfig) -> Result<Self, ModelError> {
        if config.regions.is_empty() {
            return Err(ModelError::Config("at least one conductivity region is required".into()));
        }
        let (mesh, head_dofs) =
            build_mesh([0.0, 1.0, 0.0, 1.0], config.nx, config.ny, config.degree, &[BoundarySide::Bottom, BoundarySide::Top])?;
        config.newton.validate()?;
        let grid = config.time_grid()?;
        let assembler = Assembler::new(&mesh);
        let element_region = (0..mesh.num_elements()).map(|e| config.region_of(mesh.element_center(e))).collect();
        let pumping = config.wells(&config.pumping)?;
        let injection = config.wells(&config.injection)?;
        let head_load = assemble_load(&mesh, |p| gaussian_wells(&pumping, config.pumping_variance, p.x));
        let tracer_load = assemble_load(&mesh, |p| gaussian_wells(&injection, config.injection_variance, p.x));
        let mass = assembler.mass(&mesh);
        let stiffness = assembler.stiffness(&mesh, |_| 1.0);
        Ok(Self { config, mesh, head_dofs, grid, assembler, element_region, head_load, tracer_load, mass, stiffness })
    }

    pub fn num_regions(&self) -> usize {
        self.config.regions.len()
    }

    fn check_mu(&self, mu: &[f64]) -> Result<(), ModelError> {
        if mu.len() != self.num_regions() || mu.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::InvalidParameter(format!(
                "expected {} finite log-conductivities, got {mu:?}",
                self.num_regions()
            )));
        }
        Ok(())
    }

    /// Conductivity `exp(mu_r)` of each element.
    pub fn element_conductivity(&self, mu: &[f64]) -> Vec<f64> {
        self.element_region.iter().map(|r| mu[*r].exp()).collect()
    }

    /// Positive head for log-conductivity `mu`.
    pub fn hydraulic_head(&self, mu: &[f64]) -> Result<NewtonSolution, ModelError> {
        self.hydraulic_head_with(mu, &self.config.newton)
    }

    pub fn hydraulic_head_with(&self, mu: &[f64], newton: &NewtonConfig) -> Result<NewtonSolution, ModelError> {
        self.check_mu(mu)?;
        let k = self.element_conductivity(mu);
        Ok(newton_solve_quadratic_elliptic(&self.mesh, &self.head_dofs, |p| k[p.element], &self.head_load, newton)?)
    }

    /// `beta = -k grad u` at every element centre.
    pub fn tracer_velocity(&self, head_nodal: &[f64], mu: &[f64]) -> Vec<[f64; 2]> {
        tracer_velocity(&self.mesh, head_nodal, &self.element_conductivity(mu))
    }

    /// Transport operator `D(beta) + A(beta)` on all nodes.
    pub fn transport_operator(&self, velocity: &[[f64; 2]]) -> SparseOperator {
        let (d_m, d_l) = (self.config.d_m, self.config.d_l);
        let disp = self.assembler.diffusion(&self.mesh, |p| {
            let b = velocity[p.element];
            [[d_m + d_l * b[0] * b[0], d_l * b[0] * b[1]], [d_l * b[1] * b[0], d_m + d_l * b[1] * b[1]]]
        });
        let adv = self.assembler.advection(&self.mesh, |p| velocity[p.element]);
        SparseOperator::linear_combination(&[(1.0, &disp), (1.0, &adv)])
    }

    /// Concentration trajectory for a given element velocity field.
    pub fn concentration(&self, velocity: &[[f64; 2]]) -> Result<SpaceTimeTrajectory, ModelError> {
        let cn = CrankNicolson::new(&self.mass, &self.transport_operator(velocity), self.grid.dt)?;
        let source: Vec<f64> = self.tracer_load.iter().map(|f| self.grid.dt * f).collect();
        let states = cn.march(&vec![0.0; self.mesh.num_nodes()], self.grid.nt, Some(&source));
        Ok(SpaceTimeTrajectory::from_states(&states, self.grid, BasisTag::FullOrder))
    }

    /// Full forward solve: head, velocity, concentration.
    pub fn solve(&self, mu: &[f64]) -> Result<TracerSolution, ModelError> {
        let head = self.hydraulic_head(mu)?;
        let velocity = self.tracer_velocity(&head.nodal, mu);
        let concentration = self.concentration(&velocity)?;
        Ok(TracerSolution { head, velocity, concentration })
    }

    /// `H^1` inner product on the free head DOFs.
    pub fn head_h1_inner_product(&self) -> SparseOperator {
        let free = self.head_dofs.free_nodes();
        SparseOperator::linear_combination(&[(1.0, &self.mass), (1.0, &self.stiffness)]).submatrix(free, free)
    }

    /// `H^1` inner product on all concentration DOFs.
    pub fn concentration_h1_inner_product(&self) -> SparseOperator {
        SparseOperator::linear_combination(&[(1.0, &self.mass), (1.0, &self.stiffness)])
    }
}

/// `beta_e = -k_e grad u(x_e)` with `x_e` the centre of element `e`.
pub fn tracer_velocity(mesh: &CartesianMesh, head_nodal: &[f64], conductivity: &[f64]) -> Vec<[f64; 2]> {
    (0..mesh.num_elements())
        .map(|e| {
            let g = mesh.center_gradient(head_nodal, e);
            [-conductivity[e] * g[0], -conductivity[e] * g[1]]
        })
        .collect()
}

/// Convenience wrapper: builds the model and solves once.
pub fn tracer_forward(mu: &[f64], config: &TracerConfig) -> Result<TracerSolution, ModelError> {
    TracerModel::new(config.clone())?.solve(mu)
}
