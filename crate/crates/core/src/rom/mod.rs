//! Reduced-basis construction (POD, strong greedy) and online reduced
//! solvers for both benchmark models.

pub mod archive;
pub mod error;
pub mod greedy;
pub mod pod;
pub mod taylor_green;
pub mod tracer;

pub use archive::{Archive, ArchiveSection};
pub use error::{rom_error_report, space_time_norm, ErrorReport};
pub use greedy::{strong_greedy, GreedyConfig, GreedyOutcome, ProjectionReducer, ReducedSolverFactory};
pub use pod::{pod, pod_matrix, PodBasis, PodTarget, SnapshotSet};
pub use taylor_green::{project_taylor_green, ReducedTaylorGreen, TaylorGreenReducer};
pub use tracer::{assemble_tracer_tensors, ReducedTracer, TensorBudget};

use serde::{Deserialize, Serialize};

use crate::fem2d::{FemError, SparseOperator};
use crate::models::ModelError;

/// Which spatial inner product a basis is orthonormal in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerProductTag {
    L2,
    H1,
    /// Gradient inner product plus a tiny `L^2` regularization.
    H1Seminorm,
}

impl InnerProductTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::L2 => "l2",
            Self::H1 => "h1",
            Self::H1Seminorm => "h1_seminorm",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "l2" => Some(Self::L2),
            "h1" => Some(Self::H1),
            "h1_seminorm" => Some(Self::H1Seminorm),
            _ => None,
        }
    }
}

/// A symmetric positive definite Gram operator with its tag.
#[derive(Debug, Clone)]
pub struct InnerProduct {
    pub tag: InnerProductTag,
    pub op: SparseOperator,
}

impl InnerProduct {
    pub fn new(tag: InnerProductTag, op: SparseOperator) -> Self {
        Self { tag, op }
    }

    pub fn dim(&self) -> usize {
        self.op.nrows()
    }

    pub fn norm_sq(&self, v: &[f64]) -> f64 {
        self.op.inner(v, v)
    }

    pub fn norm(&self, v: &[f64]) -> f64 {
        self.norm_sq(v).max(0.0).sqrt()
    }
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum RomError {
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("greedy stagnated at basis size {basis_size}: max error {error:e} has not decreased for 3 iterations")]
    Stagnation { basis_size: usize, error: f64, partial: Box<GreedyOutcome> },
    #[error("tensor B needs {required} bytes, budget is {budget} bytes")]
    MemoryBudget { required: u64, budget: u64 },
    #[error("reduced solve failed: {0}")]
    Solve(String),
    #[error("archive error: {0}")]
    Archive(String),
}
