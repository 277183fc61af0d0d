//! Experiment configuration (TOML) with per-problem defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::BenchError;
use crate::enkm::{Perturbation, TerminationPolicy, Variant};
use crate::models::{TaylorGreenConfig, TracerConfig, REFERENCE_LOG_CONDUCTIVITY};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Problem {
    TaylorGreen,
    Tracer,
}

impl Problem {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::TaylorGreen => "taylor_green",
            Self::Tracer => "tracer",
        }
    }

    pub fn num_parameters(&self) -> usize {
        match self {
            Self::TaylorGreen => 1,
            Self::Tracer => REFERENCE_LOG_CONDUCTIVITY.len(),
        }
    }
}

/// Snapshot generation and reduced-basis sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OfflineConfig {
    /// Training parameters. Taylor–Green uses the grid
    /// `1 / (9.5 + 0.5 s)`, `s = 1..=train_size`; the tracer draws from
    /// the prior.
    pub train_size: usize,
    /// Random test parameters for the convergence report.
    pub test_size: usize,
    /// Strong-greedy target (Taylor–Green).
    pub greedy_target: f64,
    pub greedy_max_size: usize,
    /// Head modes (tracer).
    pub head_size: usize,
    /// Concentration modes assembled into the tensors (tracer).
    pub concentration_size: usize,
    /// Concentration snapshots per training parameter (tracer).
    pub snapshots_per_parameter: usize,
    pub tensor_budget_bytes: u64,
    /// Surrogate sizes prepared for the online phase (Taylor–Green `N`,
    /// tracer `M`). Empty means the largest available.
    pub basis_sizes: Vec<usize>,
}

/// Online sweep: the study runs the Cartesian product of the lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub ensemble_sizes: Vec<usize>,
    pub noise_levels: Vec<f64>,
    /// Noise levels are multiples of `|G(mu*)|_inf` rather than absolute
    /// standard deviations.
    pub relative_noise: bool,
    pub replicates: usize,
    pub policy: TerminationPolicy,
    pub perturbation: Perturbation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: Problem,
    pub seed: u64,
    /// Worker threads; 0 uses all cores.
    pub workers: usize,
    pub out_dir: PathBuf,
    pub mu_star: Vec<f64>,
    pub variants: Vec<Variant>,
    pub taylor_green: TaylorGreenConfig,
    pub tracer: TracerConfig,
    pub offline: OfflineConfig,
    pub study: StudyConfig,
}

impl ExperimentConfig {
    pub fn taylor_green() -> Self {
        Self {
            problem: Problem::TaylorGreen,
            seed: 1,
            workers: 0,
            out_dir: PathBuf::from("runs/taylor_green"),
            mu_star: vec![0.04],
            variants: vec![Variant::Full, Variant::RbBiased, Variant::RbAdjusted],
            taylor_green: TaylorGreenConfig::desk(),
            tracer: TracerConfig::desk(),
            offline: OfflineConfig {
                train_size: 81,
                test_size: 20,
                greedy_target: 1e-2,
                greedy_max_size: 80,
                head_size: 40,
                concentration_size: 120,
                snapshots_per_parameter: 25,
                tensor_budget_bytes: 2 << 30,
                basis_sizes: Vec::new(),
            },
            study: StudyConfig {
                ensemble_sizes: vec![40],
                noise_levels: vec![1e-5],
                relative_noise: true,
                replicates: 8,
                policy: TerminationPolicy { update_threshold: Some(1e-6), discrepancy: None, max_iters: 6 },
                perturbation: Perturbation::PerParticle,
            },
        }
    }

    pub fn tracer() -> Self {
        let base = Self::taylor_green();
        Self {
            problem: Problem::Tracer,
            out_dir: PathBuf::from("runs/tracer"),
            mu_star: REFERENCE_LOG_CONDUCTIVITY.to_vec(),
            variants: vec![Variant::RbBiased, Variant::RbAdjusted],
            offline: OfflineConfig { train_size: 100, test_size: 10, ..base.offline.clone() },
            study: StudyConfig {
                ensemble_sizes: vec![80],
                noise_levels: vec![1e-3],
                relative_noise: false,
                policy: TerminationPolicy { update_threshold: Some(1e-6), discrepancy: None, max_iters: 5 },
                ..base.study.clone()
            },
            ..base
        }
    }

    pub fn defaults_for(problem: Problem) -> Self {
        match problem {
            Problem::TaylorGreen => Self::taylor_green(),
            Problem::Tracer => Self::tracer(),
        }
    }

    /// Parses a TOML document; keys it leaves out take the defaults of its
    /// `problem`.
    pub fn from_toml(text: &str) -> Result<Self, BenchError> {
        let user: toml::Table = toml::from_str(text).map_err(|e| BenchError::Config(e.to_string()))?;
        let problem = match user.get("problem") {
            Some(v) => Problem::deserialize(v.clone()).map_err(|e| BenchError::Config(format!("problem: {e}")))?,
            None => return Err(BenchError::Config("missing key `problem` (taylor_green or tracer)".into())),
        };
        let defaults = toml::Table::try_from(Self::defaults_for(problem)).map_err(|e| BenchError::Config(e.to_string()))?;
        let merged = merge(defaults, user);
        let config: Self = merged.try_into().map_err(|e: toml::de::Error| BenchError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, BenchError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| BenchError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String, BenchError> {
        toml::to_string(self).map_err(|e| BenchError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |m: String| Err(BenchError::Config(m));
        if self.mu_star.len() != self.problem.num_parameters() {
            return bad(format!("mu_star has {} entries, {} needs {}", self.mu_star.len(), self.problem.as_str(), self.problem.num_parameters()));
        }
        if self.variants.is_empty() {
            return bad("variant list is empty".into());
        }
        let s = &self.study;
        if s.ensemble_sizes.is_empty() || s.noise_levels.is_empty() {
            return bad("ensemble_sizes and noise_levels must be non-empty".into());
        }
        if s.ensemble_sizes.iter().any(|&j| j < 2) {
            return bad("ensemble sizes must be at least 2".into());
        }
        if s.noise_levels.iter().any(|&n| !(n > 0.0 && n.is_finite())) {
            return bad("noise levels must be positive".into());
        }
        if s.replicates == 0 {
            return bad("replicates must be at least 1".into());
        }
        if s.policy.max_iters == 0 {
            return bad("policy.max_iters must be at least 1".into());
        }
        let o = &self.offline;
        if o.train_size < 2 {
            return bad("offline.train_size must be at least 2".into());
        }
        if o.basis_sizes.contains(&0) {
            return bad("basis sizes must be positive".into());
        }
        if self.problem == Problem::Tracer && (o.head_size == 0 || o.concentration_size == 0 || o.snapshots_per_parameter == 0) {
            return bad("tracer head_size, concentration_size and snapshots_per_parameter must be positive".into());
        }
        Ok(())
    }

    /// Hash of everything the offline artifacts depend on.
    pub fn offline_hash(&self) -> String {
        let model = match self.problem {
            Problem::TaylorGreen => serde_json::to_value(&self.taylor_green),
            Problem::Tracer => serde_json::to_value(&self.tracer),
        }
        .expect("model config serializes");
        let key = serde_json::json!({
            "problem": self.problem,
            "seed": self.seed,
            "model": model,
            "offline": self.offline,
        });
        hex::encode(Sha256::digest(key.to_string().as_bytes()))
    }
}

/// Recursive table merge; values in `over` win.
fn merge(mut base: toml::Table, over: toml::Table) -> toml::Table {
    for (k, v) in over {
        match (base.remove(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => {
                base.insert(k, toml::Value::Table(merge(b, o)));
            }
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
    base
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_takes_problem_defaults() {
        let c = ExperimentConfig::from_toml("problem = \"tracer\"\nseed = 9\n[study]\nreplicates = 2\n").unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.study.replicates, 2);
        assert_eq!(c.study.ensemble_sizes, vec![80]);
        assert_eq!(c.mu_star.len(), 6);
        assert_eq!(c.tracer, TracerConfig::desk());
    }

    #[test]
    fn round_trip_through_toml() {
        let c = ExperimentConfig::taylor_green();
        assert_eq!(ExperimentConfig::from_toml(&c.to_toml().unwrap()).unwrap(), c);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        assert!(ExperimentConfig::from_toml("seed = 1").is_err());
        assert!(ExperimentConfig::from_toml("problem = \"taylor_green\"\n[study]\nensemble_sizes = []\n").is_err());
        assert!(ExperimentConfig::from_toml("problem = \"taylor_green\"\n[study]\nreplicates = 0\n").is_err());
        assert!(ExperimentConfig::from_toml("problem = \"taylor_green\"\nmu_star = [0.1, 0.2]\n").is_err());
        assert!(ExperimentConfig::from_toml("problem = \"taylor_green\"\nbogus = 1\n").is_err());
    }

    #[test]
    fn offline_hash_ignores_study_settings() {
        let a = ExperimentConfig::taylor_green();
        let mut b = a.clone();
        b.study.replicates = 3;
        assert_eq!(a.offline_hash(), b.offline_hash());
        b.offline.greedy_target = 1e-3;
        assert_ne!(a.offline_hash(), b.offline_hash());
    }
}
