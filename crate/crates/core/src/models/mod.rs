//! Full-order benchmark models: Taylor–Green advection-diffusion and the
//! coupled head/tracer transport problem.

pub mod params;
pub mod taylor_green;
pub mod tracer;
pub mod trajectory;
pub mod wendland;

pub use params::{ParameterBox, ParameterVector};
pub use taylor_green::{taylor_green_forward, taylor_green_velocity, TaylorGreenConfig, TaylorGreenModel};
pub use tracer::{
    tracer_forward, tracer_velocity, Region, TracerConfig, TracerModel, TracerSolution, REFERENCE_LOG_CONDUCTIVITY,
};
pub use trajectory::{BasisTag, SpaceTimeTrajectory};
pub use wendland::wendland_2_1;

use crate::fem2d::FemError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
}
