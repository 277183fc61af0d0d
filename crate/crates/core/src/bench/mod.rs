//! Experiment harness: offline pipeline, inversion studies and variant
//! comparison for both benchmark problems.

pub mod compare;
pub mod config;
pub mod offline;
pub mod problem;
pub mod stats;
pub mod study;

pub use compare::{compare_variants, VerdictRow, VerdictTable};
pub use config::{ExperimentConfig, OfflineConfig, Problem, StudyConfig};
pub use offline::{load_offline, offline_pipeline, ConvergencePoint, OfflineArtifacts, OfflineManifest, PipelineStatus, Surrogate};
pub use problem::{FullOrder, TaylorGreenFom, TaylorGreenRom, TracerFom, TracerRom};
pub use stats::{loglog_slope, percentile, IterationStats};
pub use study::{invert_once, run_study, PointStats, StatsSummary};

use std::path::PathBuf;

use crate::enkm::EnkmError;
use crate::models::ModelError;
use crate::observe::ObserveError;
use crate::rom::RomError;

/// Seed-derivation tags for the harness.
pub const OFFLINE_STREAM: u64 = 0x0FF1;
pub const STUDY_STREAM: u64 = 0x57D7;

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("missing artifact {}: {hint}", path.display())]
    MissingArtifact { path: PathBuf, hint: String },
    #[error("stale artifact {}: built for config hash {found}, current config hashes to {expected}; remove the directory or choose another output directory", path.display())]
    StaleArtifact { path: PathBuf, expected: String, found: String },
    #[error("misaligned results: {0}")]
    Misaligned(String),
    #[error("i/o: {0}")]
    Io(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Rom(#[from] RomError),
    #[error(transparent)]
    Observe(#[from] ObserveError),
    #[error(transparent)]
    Enkm(#[from] EnkmError),
}

impl BenchError {
    /// Process exit code: 2 for configuration and artifact problems, 3 for
    /// numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::MissingArtifact { .. } | Self::StaleArtifact { .. } | Self::Misaligned(_) | Self::Io(_) => 2,
            Self::Model(ModelError::Config(_)) => 2,
            Self::Model(_) | Self::Rom(_) | Self::Observe(_) | Self::Enkm(_) => 3,
        }
    }
}

pub(crate) fn io_err(path: &std::path::Path, e: impl std::fmt::Display) -> BenchError {
    BenchError::Io(format!("{}: {e}", path.display()))
}
