//! Forward-response adapters: full-order and reduced solvers composed with
//! their measurement operators.

use nalgebra::{DMatrix, DVector};

use super::{BenchError, ExperimentConfig, Problem};
use crate::enkm::{ForwardResponse, PriorSpec};
use crate::models::{TaylorGreenConfig, TaylorGreenModel, TracerConfig, TracerModel};
use crate::observe::{MeasurementOperator, PointwiseSensors, RieszSensors};
use crate::rom::{ReducedTaylorGreen, ReducedTracer};

fn check_dim(mu: &[f64], n: usize) -> Result<(), String> {
    if mu.len() != n {
        return Err(format!("expected {n} parameters, got {}", mu.len()));
    }
    Ok(())
}

pub struct TaylorGreenFom {
    pub model: TaylorGreenModel,
    pub op: MeasurementOperator,
}

impl TaylorGreenFom {
    pub fn trajectory(&self, mu: f64) -> Result<DMatrix<f64>, String> {
        Ok(self.model.solve(mu).map_err(|e| e.to_string())?.coefficients)
    }
}

impl ForwardResponse for TaylorGreenFom {
    fn num_measurements(&self) -> usize {
        self.op.num_measurements()
    }

    fn num_parameters(&self) -> usize {
        1
    }

    fn respond(&self, mu: &[f64]) -> Result<DVector<f64>, String> {
        check_dim(mu, 1)?;
        self.op.measure(&self.trajectory(mu[0])?).map_err(|e| e.to_string())
    }
}

/// Reduced Taylor–Green model with the measurement operator pulled back to
/// the reduced coefficients.
pub struct TaylorGreenRom {
    pub rom: ReducedTaylorGreen,
    pub op: MeasurementOperator,
}

impl TaylorGreenRom {
    /// Uses the leading `n` basis functions of `rom`/`basis`.
    pub fn new(rom: &ReducedTaylorGreen, basis: &DMatrix<f64>, full_op: &MeasurementOperator, n: usize) -> Self {
        let n = n.min(rom.len());
        Self { rom: rom.truncated(n), op: full_op.reduced(&basis.columns(0, n).into_owned()) }
    }
}

impl ForwardResponse for TaylorGreenRom {
    fn num_measurements(&self) -> usize {
        self.op.num_measurements()
    }

    fn num_parameters(&self) -> usize {
        1
    }

    fn respond(&self, mu: &[f64]) -> Result<DVector<f64>, String> {
        check_dim(mu, 1)?;
        let traj = self.rom.solve(mu[0]).map_err(|e| e.to_string())?;
        self.op.measure(&traj).map_err(|e| e.to_string())
    }
}

pub struct TracerFom {
    pub model: TracerModel,
    pub op: MeasurementOperator,
}

impl ForwardResponse for TracerFom {
    fn num_measurements(&self) -> usize {
        self.op.num_measurements()
    }

    fn num_parameters(&self) -> usize {
        self.model.num_regions()
    }

    fn respond(&self, mu: &[f64]) -> Result<DVector<f64>, String> {
        check_dim(mu, self.model.num_regions())?;
        let sol = self.model.solve(mu).map_err(|e| e.to_string())?;
        self.op.measure(&sol.concentration.coefficients).map_err(|e| e.to_string())
    }
}

pub struct TracerRom {
    pub rom: ReducedTracer,
    pub op: MeasurementOperator,
}

impl TracerRom {
    /// Uses `n` head and `m` concentration modes.
    pub fn new(rom: &ReducedTracer, conc_basis: &DMatrix<f64>, full_op: &MeasurementOperator, n: usize, m: usize) -> Self {
        let rom = rom.truncated(n, m);
        let m = rom.concentration_size();
        Self { rom, op: full_op.reduced(&conc_basis.columns(0, m).into_owned()) }
    }
}

impl ForwardResponse for TracerRom {
    fn num_measurements(&self) -> usize {
        self.op.num_measurements()
    }

    fn num_parameters(&self) -> usize {
        self.rom.num_regions()
    }

    fn respond(&self, mu: &[f64]) -> Result<DVector<f64>, String> {
        check_dim(mu, self.rom.num_regions())?;
        let (_, c) = self.rom.solve(mu).map_err(|e| e.to_string())?;
        self.op.measure(&c).map_err(|e| e.to_string())
    }
}

/// The full-order forward map of a configured problem.
pub enum FullOrder {
    TaylorGreen(TaylorGreenFom),
    Tracer(TracerFom),
}

impl FullOrder {
    /// Builds the model and its measurement operator (Riesz sensors for
    /// Taylor–Green, point sensors for the tracer).
    pub fn new(config: &ExperimentConfig) -> Result<Self, BenchError> {
        Ok(match config.problem {
            Problem::TaylorGreen => {
                let model = TaylorGreenModel::new(config.taylor_green.clone())?;
                let op = MeasurementOperator::riesz(&model.mesh, Some(&model.dofs), &model.grid, &RieszSensors::taylor_green())?;
                Self::TaylorGreen(TaylorGreenFom { model, op })
            }
            Problem::Tracer => {
                let model = TracerModel::new(config.tracer.clone())?;
                let op = MeasurementOperator::pointwise(&model.mesh, None, &model.grid, &PointwiseSensors::tracer())?;
                Self::Tracer(TracerFom { model, op })
            }
        })
    }

    pub fn forward(&self) -> &dyn ForwardResponse {
        match self {
            Self::TaylorGreen(f) => f,
            Self::Tracer(f) => f,
        }
    }

    pub fn measurement(&self) -> &MeasurementOperator {
        match self {
            Self::TaylorGreen(f) => &f.op,
            Self::Tracer(f) => &f.op,
        }
    }

    /// Uniform prior of the problem.
    pub fn prior(&self) -> PriorSpec {
        let b = match self {
            Self::TaylorGreen(_) => TaylorGreenConfig::parameter_box(),
            Self::Tracer(_) => TracerConfig::parameter_box(),
        };
        PriorSpec { min: b.min, max: b.max }
    }
}
