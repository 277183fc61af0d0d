//! Structured 2D finite elements: Cartesian meshes with Q1/Q2 Lagrange
//! spaces, sparse assembly, Crank–Nicolson stepping and a Newton solver for
//! the quadratic elliptic head equation.

pub mod assembly;
pub mod banded;
pub mod mesh;
pub mod newton;
pub mod quadrature;
pub mod sparse;
pub mod time;

pub use assembly::{assemble_advection, assemble_load, assemble_mass, assemble_stiffness, Assembler};
pub use banded::BandedLu;
pub use mesh::{build_mesh, BoundarySide, CartesianMesh, DofMap, ElementPoint, NodeKind};
pub use newton::{damped_newton, newton_solve_quadratic_elliptic, InitialGuess, NewtonConfig, NewtonSolution};
pub use quadrature::GaussLegendre;
pub use sparse::{Pattern, SparseOperator};
pub use time::{crank_nicolson_advance, CrankNicolson, TimeGrid};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FemError {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("point ({}, {}) lies outside the mesh", .0[0], .0[1])]
    PointOutside([f64; 2]),
    #[error("factorization failed at pivot {pivot}: {context}")]
    Factorization { pivot: usize, context: String },
    #[error("invalid time grid: {0}")]
    TimeGrid(String),
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("Newton iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NewtonDiverged { iterations: usize, residual: f64 },
    #[error("Newton converged to a negative solution (dof {dof}, value {value:e})")]
    NegativeBranch { dof: usize, value: f64 },
}
