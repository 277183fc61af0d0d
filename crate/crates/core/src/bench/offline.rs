//! Offline phase: training snapshots, reduced bases and operators, bias
//! moments, all persisted with content hashes under `<out>/offline`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::problem::{FullOrder, TaylorGreenRom, TracerRom};
use super::{io_err, BenchError, ExperimentConfig, Problem, OFFLINE_STREAM};
use crate::enkm::{estimate_bias_moments, BiasMoments, ForwardResponse, PriorSpec};
use crate::rom::{
    assemble_tracer_tensors, pod_matrix, project_taylor_green, rom_error_report, strong_greedy, Archive, GreedyConfig,
    InnerProduct, InnerProductTag, PodBasis, PodTarget, ReducedTaylorGreen, ReducedTracer, TaylorGreenReducer,
    TensorBudget,
};
use crate::rom::greedy::GreedyStep;
use crate::seeding::stream;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    pub file: String,
    /// SHA-256 of the file bytes.
    pub sha256: String,
}

/// Maximum relative test errors of the surrogate of a given size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergencePoint {
    pub size: usize,
    /// `L^2(I; H^1)` relative error.
    pub max_space_time: f64,
    pub max_sup: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasSummary {
    pub size: usize,
    pub mean_inf: f64,
    pub covariance_trace: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfflineManifest {
    pub config_hash: String,
    pub problem: Problem,
    pub artifacts: BTreeMap<String, ArtifactEntry>,
    /// Surrogate sizes with persisted bias moments.
    pub basis_sizes: Vec<usize>,
    pub greedy: Vec<GreedyStep>,
    pub convergence: Vec<ConvergencePoint>,
    pub bias: Vec<BiasSummary>,
    /// Wall-clock seconds per stage.
    pub timings: BTreeMap<String, f64>,
}

#[derive(Debug, Clone)]
pub enum Surrogate {
    TaylorGreen { basis: PodBasis, rom: ReducedTaylorGreen },
    Tracer { head: PodBasis, concentration: PodBasis, rom: ReducedTracer },
}

impl Surrogate {
    /// Largest available surrogate size (`N` or `M`).
    pub fn max_size(&self) -> usize {
        match self {
            Self::TaylorGreen { rom, .. } => rom.len(),
            Self::Tracer { rom, .. } => rom.concentration_size(),
        }
    }

    /// Reduced forward map of size `size` (Taylor–Green `N`, tracer `M`
    /// with all head modes).
    pub fn response(&self, full: &FullOrder, size: usize) -> Box<dyn ForwardResponse> {
        match self {
            Self::TaylorGreen { basis, rom } => Box::new(TaylorGreenRom::new(rom, &basis.modes, full.measurement(), size)),
            Self::Tracer { concentration, rom, .. } => {
                Box::new(TracerRom::new(rom, &concentration.modes, full.measurement(), rom.head_size(), size))
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct OfflineArtifacts {
    pub manifest: OfflineManifest,
    pub surrogate: Surrogate,
    pub training_params: Vec<Vec<f64>>,
    pub training_responses: Vec<DVector<f64>>,
    /// Bias moments per surrogate size.
    pub bias: BTreeMap<usize, BiasMoments>,
}

impl OfflineArtifacts {
    pub fn bias_for(&self, size: usize) -> Result<&BiasMoments, BenchError> {
        self.bias.get(&size).ok_or_else(|| {
            BenchError::Config(format!(
                "no bias moments for surrogate size {size}; offline sizes are {:?}",
                self.manifest.basis_sizes
            ))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PipelineStatus {
    Built,
    UpToDate,
}

pub fn offline_dir(config: &ExperimentConfig) -> PathBuf {
    config.out_dir.join("offline")
}

fn sample_prior(prior: &PriorSpec, count: usize, seed: u64, tag: u64) -> Vec<Vec<f64>> {
    let mut rng = stream(seed, &[OFFLINE_STREAM, tag]);
    (0..count)
        .map(|_| prior.min.iter().zip(&prior.max).map(|(a, b)| a + (b - a) * rng.random::<f64>()).collect())
        .collect()
}

fn resolve_sizes(requested: &[usize], available: usize) -> Vec<usize> {
    let mut sizes: Vec<usize> = if requested.is_empty() { vec![available] } else { requested.to_vec() };
    for s in sizes.iter_mut() {
        if *s > available {
            log::warn!("surrogate size {s} exceeds the {available} available modes; using {available}");
            *s = available;
        }
    }
    sizes.sort_unstable();
    sizes.dedup();
    sizes
}

fn bias_to_archive(b: &BiasMoments, size: usize) -> Archive {
    let mut a = Archive::new("bias_moments");
    a.meta = serde_json::json!({ "samples": b.samples, "size": size });
    a.push_vector("mean", b.mean.as_slice());
    a.push_matrix("covariance", &b.covariance);
    a
}

fn bias_from_archive(a: &Archive) -> Result<BiasMoments, BenchError> {
    if a.kind != "bias_moments" {
        return Err(BenchError::Io(format!("expected bias_moments archive, found {}", a.kind)));
    }
    let samples = a.meta.get("samples").and_then(|v| v.as_u64()).ok_or_else(|| BenchError::Io("bias archive lacks samples".into()))?;
    Ok(BiasMoments { mean: a.vector("mean")?, covariance: a.matrix("covariance")?, samples: samples as usize })
}

fn training_archive(params: &[Vec<f64>], responses: &[DVector<f64>]) -> Archive {
    let mut a = Archive::new("training_responses");
    let np = params.first().map_or(0, |p| p.len());
    a.push_matrix("params", &DMatrix::from_fn(np, params.len(), |i, s| params[s][i]));
    let nm = responses.first().map_or(0, |r| r.len());
    a.push_matrix("responses", &DMatrix::from_fn(nm, responses.len(), |i, s| responses[s][i]));
    a
}

fn training_from_archive(a: &Archive) -> Result<(Vec<Vec<f64>>, Vec<DVector<f64>>), BenchError> {
    let p = a.matrix("params")?;
    let r = a.matrix("responses")?;
    Ok((
        p.column_iter().map(|c| c.iter().cloned().collect()).collect(),
        r.column_iter().map(|c| c.into_owned()).collect(),
    ))
}

fn file_sha(path: &Path) -> Result<String, BenchError> {
    let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

struct Built {
    surrogate: Surrogate,
    params: Vec<Vec<f64>>,
    responses: Vec<DVector<f64>>,
    greedy: Vec<GreedyStep>,
    convergence: Vec<ConvergencePoint>,
    timings: BTreeMap<String, f64>,
}

fn build_taylor_green(config: &ExperimentConfig, full: &FullOrder) -> Result<Built, BenchError> {
    let FullOrder::TaylorGreen(fom) = full else { unreachable!("problem mismatch") };
    let model = &fom.model;
    let mut timings = BTreeMap::new();
    let clock = Instant::now();
    let params: Vec<Vec<f64>> = (1..=config.offline.train_size).map(|s| vec![1.0 / (9.5 + 0.5 * s as f64)]).collect();
    let trajectories = params
        .par_iter()
        .map(|mu| model.solve(mu[0]).map(|t| t.coefficients))
        .collect::<Result<Vec<_>, _>>()?;
    let responses = trajectories.iter().map(|t| fom.op.measure(t)).collect::<Result<Vec<_>, _>>()?;
    timings.insert("snapshots".into(), clock.elapsed().as_secs_f64());

    let clock = Instant::now();
    let inner = InnerProduct::new(InnerProductTag::H1Seminorm, model.gradient_inner_product());
    let greedy_config =
        GreedyConfig { target: config.offline.greedy_target, max_size: config.offline.greedy_max_size, ..Default::default() };
    let reducer = TaylorGreenReducer { model, inner: &inner };
    let outcome = match strong_greedy(&params, &trajectories, &inner, model.grid.dt, &greedy_config, &reducer) {
        Ok(o) => o,
        Err(crate::rom::RomError::Stagnation { partial, basis_size, error }) => {
            log::warn!("greedy stagnated at size {basis_size} (error {error:e}); keeping the partial basis");
            *partial
        }
        Err(e) => return Err(e.into()),
    };
    let basis = outcome.basis;
    let rom = project_taylor_green(&basis.modes, model, &inner);
    timings.insert("greedy".into(), clock.elapsed().as_secs_f64());
    log::info!("greedy basis of size {} (training error {:e})", basis.len(), outcome.max_error);

    let clock = Instant::now();
    let test = sample_prior(&full.prior(), config.offline.test_size, config.seed, 1);
    let test_fom = test.par_iter().map(|mu| model.solve(mu[0]).map(|t| t.coefficients)).collect::<Result<Vec<_>, _>>()?;
    let h1 = model.h1_inner_product();
    let mut convergence = Vec::new();
    if !test.is_empty() {
        for n in 1..=rom.len() {
            let small = rom.truncated(n);
            let psi = basis.modes.columns(0, n);
            let recon = test.iter().map(|mu| small.solve(mu[0]).map(|c| psi * c)).collect::<Result<Vec<_>, _>>()?;
            let rep = rom_error_report(&test_fom, &recon, &h1, model.grid.dt)?;
            convergence.push(ConvergencePoint { size: n, max_space_time: rep.max_space_time, max_sup: rep.max_sup });
        }
    }
    timings.insert("convergence".into(), clock.elapsed().as_secs_f64());
    Ok(Built {
        surrogate: Surrogate::TaylorGreen { basis, rom },
        params,
        responses,
        greedy: outcome.history,
        convergence,
        timings,
    })
}

/// Level indices of `z` concentration samples spread over `nt` steps.
fn sample_levels(nt: usize, z: usize) -> Vec<usize> {
    let z = z.min(nt);
    let mut v: Vec<usize> = (1..=z).map(|k| ((k * nt) as f64 / z as f64).round() as usize).collect();
    v.dedup();
    v
}

fn build_tracer(config: &ExperimentConfig, full: &FullOrder) -> Result<Built, BenchError> {
    let FullOrder::Tracer(fom) = full else { unreachable!("problem mismatch") };
    let model = &fom.model;
    let o = &config.offline;
    let mut timings = BTreeMap::new();
    let clock = Instant::now();
    let params = sample_prior(&full.prior(), o.train_size, config.seed, 0);
    let solutions = params.par_iter().map(|mu| model.solve(mu)).collect::<Result<Vec<_>, _>>()?;
    let responses =
        solutions.iter().map(|s| fom.op.measure(&s.concentration.coefficients)).collect::<Result<Vec<_>, _>>()?;
    timings.insert("snapshots".into(), clock.elapsed().as_secs_f64());

    let clock = Instant::now();
    let free = model.head_dofs.free_nodes();
    let heads = DMatrix::from_fn(free.len(), solutions.len(), |i, s| solutions[s].head.nodal[free[i]]);
    let hx = InnerProduct::new(InnerProductTag::H1, model.head_h1_inner_product());
    let head = pod_matrix(&heads, &hx, PodTarget::Rank(o.head_size))?;
    let levels = sample_levels(model.grid.nt, o.snapshots_per_parameter);
    let z = levels.len();
    let conc = DMatrix::from_fn(model.mesh.num_nodes(), solutions.len() * z, |i, c| {
        solutions[c / z].concentration.coefficients[(i, levels[c % z])]
    });
    drop(solutions);
    let cx = InnerProduct::new(InnerProductTag::H1, model.concentration_h1_inner_product());
    let concentration = pod_matrix(&conc, &cx, PodTarget::Rank(o.concentration_size))?;
    if head.rank_deficient || concentration.rank_deficient {
        log::warn!("snapshot sets are rank deficient: {} head, {} concentration modes", head.len(), concentration.len());
    }
    timings.insert("pod".into(), clock.elapsed().as_secs_f64());

    let clock = Instant::now();
    let rom = assemble_tracer_tensors(&head.modes, &concentration.modes, model, &TensorBudget { bytes: o.tensor_budget_bytes })?;
    timings.insert("tensors".into(), clock.elapsed().as_secs_f64());

    let clock = Instant::now();
    let test = sample_prior(&full.prior(), o.test_size, config.seed, 1);
    let test_fom = test.par_iter().map(|mu| model.solve(mu)).collect::<Result<Vec<_>, _>>()?;
    let test_conc: Vec<DMatrix<f64>> = test_fom.into_iter().map(|s| s.concentration.coefficients).collect();
    let mut sizes: Vec<usize> = (1..=8).map(|k| k * rom.concentration_size() / 8).filter(|&m| m > 0).collect();
    sizes.dedup();
    let mut convergence = Vec::new();
    if !test.is_empty() {
        for m in sizes {
            let small = rom.truncated(rom.head_size(), m);
            let phi = concentration.modes.columns(0, m);
            let recon =
                test.par_iter().map(|mu| small.solve(mu).map(|(_, c)| phi * c)).collect::<Result<Vec<_>, _>>()?;
            let rep = rom_error_report(&test_conc, &recon, &cx.op, model.grid.dt)?;
            convergence.push(ConvergencePoint { size: m, max_space_time: rep.max_space_time, max_sup: rep.max_sup });
        }
    }
    timings.insert("convergence".into(), clock.elapsed().as_secs_f64());
    Ok(Built {
        surrogate: Surrogate::Tracer { head, concentration, rom },
        params,
        responses,
        greedy: Vec::new(),
        convergence,
        timings,
    })
}

/// Builds (or verifies and reloads) the offline artifacts of `config`.
/// Existing artifacts built from a different configuration are an error.
pub fn offline_pipeline(config: &ExperimentConfig) -> Result<(OfflineArtifacts, PipelineStatus), BenchError> {
    config.validate()?;
    let dir = offline_dir(config);
    if dir.join(MANIFEST).exists() {
        return Ok((load_offline(config)?, PipelineStatus::UpToDate));
    }
    std::fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    let full = FullOrder::new(config)?;
    let built = match config.problem {
        Problem::TaylorGreen => build_taylor_green(config, &full)?,
        Problem::Tracer => build_tracer(config, &full)?,
    };
    let Built { surrogate, params, responses, greedy, convergence, mut timings } = built;

    let clock = Instant::now();
    let sizes = resolve_sizes(&config.offline.basis_sizes, surrogate.max_size());
    let mut bias = BTreeMap::new();
    for &n in &sizes {
        let rom = surrogate.response(&full, n);
        bias.insert(n, estimate_bias_moments(&params, Some(&responses), full.forward(), rom.as_ref())?);
    }
    timings.insert("bias".into(), clock.elapsed().as_secs_f64());

    let mut archives: Vec<(String, Archive)> = match &surrogate {
        Surrogate::TaylorGreen { basis, rom } => {
            vec![("basis".into(), basis.to_archive()), ("rom".into(), rom.to_archive())]
        }
        Surrogate::Tracer { head, concentration, rom } => vec![
            ("head_basis".into(), head.to_archive()),
            ("concentration_basis".into(), concentration.to_archive()),
            ("rom".into(), rom.to_archive()),
        ],
    };
    archives.push(("training".into(), training_archive(&params, &responses)));
    for (n, b) in &bias {
        archives.push((format!("bias_{n}"), bias_to_archive(b, *n)));
    }
    let mut artifacts = BTreeMap::new();
    for (name, a) in &archives {
        let file = format!("{name}.rbar");
        let path = dir.join(&file);
        a.write(&path)?;
        artifacts.insert(name.clone(), ArtifactEntry { file, sha256: file_sha(&path)? });
    }
    let manifest = OfflineManifest {
        config_hash: config.offline_hash(),
        problem: config.problem,
        artifacts,
        basis_sizes: sizes,
        greedy,
        convergence,
        bias: bias
            .iter()
            .map(|(n, b)| BiasSummary { size: *n, mean_inf: b.mean.amax(), covariance_trace: b.covariance.trace() })
            .collect(),
        timings,
    };
    let path = dir.join(MANIFEST);
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| BenchError::Io(e.to_string()))?;
    std::fs::write(&path, text).map_err(|e| io_err(&path, e))?;
    Ok((
        OfflineArtifacts { manifest, surrogate, training_params: params, training_responses: responses, bias },
        PipelineStatus::Built,
    ))
}

/// Loads persisted artifacts after checking the configuration hash and
/// every file digest.
pub fn load_offline(config: &ExperimentConfig) -> Result<OfflineArtifacts, BenchError> {
    let dir = offline_dir(config);
    let path = dir.join(MANIFEST);
    if !path.exists() {
        return Err(BenchError::MissingArtifact {
            path,
            hint: "run the `offline` step with this configuration first".into(),
        });
    }
    let text = std::fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
    let manifest: OfflineManifest = serde_json::from_str(&text).map_err(|e| io_err(&path, e))?;
    let expected = config.offline_hash();
    if manifest.config_hash != expected {
        return Err(BenchError::StaleArtifact { path, expected, found: manifest.config_hash });
    }
    let read = |name: &str| -> Result<Archive, BenchError> {
        let entry = manifest.artifacts.get(name).ok_or_else(|| BenchError::MissingArtifact {
            path: dir.join(format!("{name}.rbar")),
            hint: "manifest lists no such artifact; rerun the `offline` step in a fresh directory".into(),
        })?;
        let p = dir.join(&entry.file);
        if !p.exists() {
            return Err(BenchError::MissingArtifact { path: p, hint: "rerun the `offline` step in a fresh directory".into() });
        }
        let found = file_sha(&p)?;
        if found != entry.sha256 {
            return Err(BenchError::StaleArtifact { path: p, expected: entry.sha256.clone(), found });
        }
        Ok(Archive::read(&p)?)
    };
    let surrogate = match config.problem {
        Problem::TaylorGreen => Surrogate::TaylorGreen {
            basis: PodBasis::from_archive(&read("basis")?)?,
            rom: ReducedTaylorGreen::from_archive(&read("rom")?)?,
        },
        Problem::Tracer => Surrogate::Tracer {
            head: PodBasis::from_archive(&read("head_basis")?)?,
            concentration: PodBasis::from_archive(&read("concentration_basis")?)?,
            rom: ReducedTracer::from_archive(&read("rom")?)?,
        },
    };
    let (training_params, training_responses) = training_from_archive(&read("training")?)?;
    let mut bias = BTreeMap::new();
    for &n in &manifest.basis_sizes {
        bias.insert(n, bias_from_archive(&read(&format!("bias_{n}"))?)?);
    }
    Ok(OfflineArtifacts { manifest, surrogate, training_params, training_responses, bias })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_levels_cover_the_horizon() {
        assert_eq!(sample_levels(25, 25), (1..=25).collect::<Vec<_>>());
        assert_eq!(sample_levels(25, 5), vec![5, 10, 15, 20, 25]);
        assert_eq!(sample_levels(4, 10), vec![1, 2, 3, 4]);
    }

    #[test]
    fn sizes_are_clamped_and_sorted() {
        assert_eq!(resolve_sizes(&[], 7), vec![7]);
        assert_eq!(resolve_sizes(&[9, 3, 3], 7), vec![3, 7]);
    }

    #[test]
    fn bias_archive_round_trip() {
        let b = BiasMoments::from_biases(&[DVector::from_vec(vec![1.0, 0.0]), DVector::from_vec(vec![3.0, 2.0])]).unwrap();
        assert_eq!(bias_from_archive(&bias_to_archive(&b, 4)).unwrap(), b);
    }
}
