//! Online studies: replicated inversions over a sweep of ensemble sizes,
//! noise levels and surrogate sizes.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::offline::OfflineArtifacts;
use super::problem::FullOrder;
use super::stats::IterationStats;
use super::{io_err, BenchError, ExperimentConfig, Problem, STUDY_STREAM};
use crate::enkm::{run_inversion, BiasMoments, ForwardResponse, InversionConfig, InversionResult, Variant};
use crate::observe::{relative_noise_scale, synthesize_data, NoiseModel, ObservationRecord};
use crate::seeding::derive_seed;

/// Statistics of one (sweep point, variant) cell over its replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointStats {
    pub ensemble_size: usize,
    /// Noise level as configured (relative or absolute).
    pub noise_level: f64,
    /// Absolute noise standard deviation.
    pub sigma: f64,
    /// Surrogate size; `None` for the full-order variant.
    pub basis_size: Option<usize>,
    pub variant: Variant,
    /// Relative error `|mean_n - mu*|_inf / |mu*|_inf` per iteration;
    /// replicates that stopped early contribute their final value.
    pub iterations: Vec<IterationStats>,
    pub final_errors: Vec<f64>,
    pub estimates: Vec<Vec<f64>>,
    pub iteration_counts: Vec<usize>,
    /// Files holding the replicate results, relative to the study directory.
    pub run_files: Vec<String>,
}

impl PointStats {
    pub fn final_stats(&self) -> IterationStats {
        IterationStats::from_sample(&self.final_errors)
    }

    /// Replicate average of the final estimates.
    pub fn mean_estimate(&self) -> Vec<f64> {
        let r = self.estimates.len() as f64;
        (0..self.estimates[0].len()).map(|k| self.estimates.iter().map(|e| e[k]).sum::<f64>() / r).collect()
    }

    /// `|mean estimate - mu*|_inf`.
    pub fn mean_estimate_error(&self, mu_star: &[f64]) -> f64 {
        self.mean_estimate().iter().zip(mu_star).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsSummary {
    pub problem: Problem,
    pub mu_star: Vec<f64>,
    pub replicates: usize,
    pub points: Vec<PointStats>,
    /// Wall-clock seconds per (point, variant) cell, keyed like the rows.
    pub timings: BTreeMap<String, f64>,
}

impl StatsSummary {
    /// Per-iteration table: `ensemble_size,noise_level,basis_size,variant,
    /// iteration,mean,std,p10,p90`. Contains no timings, so identical
    /// inputs give identical bytes.
    pub fn iteration_csv(&self) -> String {
        let mut s = String::from("ensemble_size,noise_level,basis_size,variant,iteration,mean,std,p10,p90\n");
        for p in &self.points {
            for (n, it) in p.iterations.iter().enumerate() {
                s.push_str(&format!(
                    "{},{:e},{},{},{},{:e},{:e},{:e},{:e}\n",
                    p.ensemble_size,
                    p.noise_level,
                    p.basis_size.map(|b| b.to_string()).unwrap_or_default(),
                    p.variant.as_str(),
                    n,
                    it.mean,
                    it.std,
                    it.p10,
                    it.p90
                ));
            }
        }
        s
    }

    /// One row per cell with final-error statistics and the error of the
    /// replicate-averaged estimate.
    pub fn summary_csv(&self) -> String {
        let mut s = String::from(
            "ensemble_size,noise_level,basis_size,variant,replicates,final_mean,final_std,final_p10,final_p90,mean_estimate_error\n",
        );
        for p in &self.points {
            let f = p.final_stats();
            s.push_str(&format!(
                "{},{:e},{},{},{},{:e},{:e},{:e},{:e},{:e}\n",
                p.ensemble_size,
                p.noise_level,
                p.basis_size.map(|b| b.to_string()).unwrap_or_default(),
                p.variant.as_str(),
                p.final_errors.len(),
                f.mean,
                f.std,
                f.p10,
                f.p90,
                p.mean_estimate_error(&self.mu_star)
            ));
        }
        s
    }

    pub fn find(&self, ensemble_size: usize, noise_level: f64, basis_size: Option<usize>, variant: Variant) -> Option<&PointStats> {
        self.points.iter().find(|p| {
            p.ensemble_size == ensemble_size
                && p.noise_level == noise_level
                && p.variant == variant
                && (variant == Variant::Full || p.basis_size == basis_size)
        })
    }

    pub fn write(&self, dir: &Path) -> Result<(), BenchError> {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        let w = |name: &str, text: String| {
            let p = dir.join(name);
            std::fs::write(&p, text).map_err(|e| io_err(&p, e))
        };
        w("study.csv", self.iteration_csv())?;
        w("summary.csv", self.summary_csv())?;
        w("summary.json", serde_json::to_string_pretty(self).map_err(|e| BenchError::Io(e.to_string()))?)
    }

    pub fn read(dir: &Path) -> Result<Self, BenchError> {
        let p = dir.join("summary.json");
        if !p.exists() {
            return Err(BenchError::MissingArtifact { path: p, hint: "run the `study` step first".into() });
        }
        let text = std::fs::read_to_string(&p).map_err(|e| io_err(&p, e))?;
        serde_json::from_str(&text).map_err(|e| io_err(&p, e))
    }
}

/// Clean data, noise model and noisy observation for one noise level. The
/// standard-normal draw is shared by all levels.
pub fn observe_at(config: &ExperimentConfig, clean: &DVector<f64>, level: f64) -> Result<(NoiseModel, ObservationRecord), BenchError> {
    let sigma = if config.study.relative_noise { level * relative_noise_scale(clean)? } else { level };
    let noise = NoiseModel::isotropic(sigma, clean.len())?;
    let obs = synthesize_data(|_: &[f64]| Ok::<_, String>(clean.clone()), &config.mu_star, &noise, config.seed)?;
    Ok((noise, obs))
}

fn relative_error(mean: &[f64], mu_star: &[f64]) -> f64 {
    let scale = mu_star.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let err = mean.iter().zip(mu_star).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    if scale > 0.0 { err / scale } else { err }
}

fn with_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T, BenchError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| BenchError::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

fn require_artifacts<'a>(config: &ExperimentConfig, artifacts: Option<&'a OfflineArtifacts>) -> Result<Option<&'a OfflineArtifacts>, BenchError> {
    let needs = config.variants.iter().any(|v| *v != Variant::Full);
    match (needs, artifacts) {
        (true, None) => Err(BenchError::MissingArtifact {
            path: super::offline::offline_dir(config),
            hint: "reduced variants need the `offline` step to run first".into(),
        }),
        _ => Ok(artifacts),
    }
}

struct Job {
    point: (usize, usize),
    variant: Variant,
    basis: Option<usize>,
    replicate: usize,
}

/// Runs every (ensemble size, noise level, surrogate size, variant)
/// combination `replicates` times. Replicate `r` of sweep point `(i, k)`
/// (ensemble-size and noise index) uses the seed derived from
/// `(seed, i, k, r)` for every variant and surrogate size. Each result is
/// written to `<out>/study/runs`, and the CSV tables next to it.
pub fn run_study(config: &ExperimentConfig, artifacts: Option<&OfflineArtifacts>) -> Result<StatsSummary, BenchError> {
    config.validate()?;
    let artifacts = require_artifacts(config, artifacts)?;
    let full = FullOrder::new(config)?;
    let prior = full.prior();
    let study_dir = config.out_dir.join("study");
    let runs_dir = study_dir.join("runs");
    std::fs::create_dir_all(&runs_dir).map_err(|e| io_err(&runs_dir, e))?;

    let clean = full.forward().respond(&config.mu_star).map_err(|e| BenchError::Observe(crate::observe::ObserveError::Forward(e)))?;
    let mut observations = Vec::new();
    for &level in &config.study.noise_levels {
        observations.push(observe_at(config, &clean, level)?);
    }
    let sizes: Vec<usize> = artifacts.map(|a| a.manifest.basis_sizes.clone()).unwrap_or_default();
    let roms: BTreeMap<usize, Box<dyn ForwardResponse>> =
        artifacts.map(|a| sizes.iter().map(|&n| (n, a.surrogate.response(&full, n))).collect()).unwrap_or_default();

    let mut jobs = Vec::new();
    for i in 0..config.study.ensemble_sizes.len() {
        for k in 0..config.study.noise_levels.len() {
            for &variant in &config.variants {
                let bases: Vec<Option<usize>> =
                    if variant == Variant::Full { vec![None] } else { sizes.iter().map(|&n| Some(n)).collect() };
                for basis in bases {
                    for replicate in 0..config.study.replicates {
                        jobs.push(Job { point: (i, k), variant, basis, replicate });
                    }
                }
            }
        }
    }

    let run = |job: &Job| -> Result<(InversionResult, f64), BenchError> {
        let (i, k) = job.point;
        let seed = derive_seed(config.seed, &[STUDY_STREAM, i as u64, k as u64, job.replicate as u64]);
        let inv = InversionConfig {
            ensemble_size: config.study.ensemble_sizes[i],
            policy: config.study.policy.clone(),
            perturbation: config.study.perturbation,
            seed,
        };
        let (noise, obs) = &observations[k];
        let (forward, bias): (&dyn ForwardResponse, Option<&BiasMoments>) = match (job.variant, job.basis) {
            (Variant::Full, _) => (full.forward(), None),
            (v, Some(n)) => {
                let a = artifacts.expect("checked above");
                (roms[&n].as_ref(), if v == Variant::RbAdjusted { Some(a.bias_for(n)?) } else { None })
            }
            (_, None) => unreachable!("reduced jobs carry a size"),
        };
        let clock = Instant::now();
        let res = run_inversion(job.variant, forward, &obs.data(), noise, &prior, bias, &inv)?;
        Ok((res, clock.elapsed().as_secs_f64()))
    };
    let results = with_pool(config.workers, || jobs.par_iter().map(run).collect::<Vec<_>>())?;

    let mut cells: BTreeMap<(usize, usize, usize, Option<usize>), Vec<(usize, InversionResult, f64)>> = BTreeMap::new();
    for (job, r) in jobs.iter().zip(results) {
        let (res, secs) = r?;
        let vi = config.variants.iter().position(|v| *v == job.variant).unwrap_or(0);
        cells.entry((job.point.0, job.point.1, vi, job.basis)).or_default().push((job.replicate, res, secs));
    }

    let mut points = Vec::new();
    let mut timings = BTreeMap::new();
    for ((i, k, vi, basis), runs) in cells {
        let variant = config.variants[vi];
        let j = config.study.ensemble_sizes[i];
        let level = config.study.noise_levels[k];
        let mut traces = Vec::new();
        let mut files = Vec::new();
        let mut estimates = Vec::new();
        let mut counts = Vec::new();
        let mut secs = 0.0;
        for (r, res, t) in &runs {
            let name = format!(
                "J{j}_noise{k}_{}{}_r{r:02}.json",
                variant.as_str(),
                basis.map(|b| format!("_n{b}")).unwrap_or_default()
            );
            res.write_json(&runs_dir.join(&name))?;
            files.push(format!("runs/{name}"));
            traces.push(res.records.iter().map(|rec| relative_error(&rec.mean, &config.mu_star)).collect::<Vec<_>>());
            estimates.push(res.estimate.clone());
            counts.push(res.iterations());
            secs += t;
        }
        let len = traces.iter().map(|t| t.len()).max().unwrap_or(0);
        let iterations = (0..len)
            .map(|n| {
                let sample: Vec<f64> = traces.iter().map(|t| t[n.min(t.len() - 1)]).collect();
                IterationStats::from_sample(&sample)
            })
            .collect();
        let final_errors = traces.iter().map(|t| *t.last().expect("prior record")).collect();
        timings.insert(
            format!("J{j}/noise{level:e}/{}{}", variant.as_str(), basis.map(|b| format!("/n{b}")).unwrap_or_default()),
            secs,
        );
        points.push(PointStats {
            ensemble_size: j,
            noise_level: level,
            sigma: observations[k].0.covariance[(0, 0)].sqrt(),
            basis_size: basis,
            variant,
            iterations,
            final_errors,
            estimates,
            iteration_counts: counts,
            run_files: files,
        });
    }
    let summary =
        StatsSummary { problem: config.problem, mu_star: config.mu_star.clone(), replicates: config.study.replicates, points, timings };
    summary.write(&study_dir)?;
    Ok(summary)
}

/// One inversion per configured variant at the first sweep point, seeded
/// with the master seed; results go to `<out>/invert`.
pub fn invert_once(config: &ExperimentConfig, artifacts: Option<&OfflineArtifacts>) -> Result<Vec<InversionResult>, BenchError> {
    config.validate()?;
    let artifacts = require_artifacts(config, artifacts)?;
    let full = FullOrder::new(config)?;
    let prior = full.prior();
    let clean = full.forward().respond(&config.mu_star).map_err(|e| BenchError::Observe(crate::observe::ObserveError::Forward(e)))?;
    let (noise, obs) = observe_at(config, &clean, config.study.noise_levels[0])?;
    let dir = config.out_dir.join("invert");
    std::fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    obs.save(&dir.join("observation.json"))?;
    let inv = InversionConfig {
        ensemble_size: config.study.ensemble_sizes[0],
        policy: config.study.policy.clone(),
        perturbation: config.study.perturbation,
        seed: config.seed,
    };
    with_pool(config.workers, || {
        let mut out = Vec::new();
        for &variant in &config.variants {
            let res = match variant {
                Variant::Full => run_inversion(variant, full.forward(), &obs.data(), &noise, &prior, None, &inv)?,
                v => {
                    let a = artifacts.expect("checked above");
                    let n = *a.manifest.basis_sizes.last().ok_or_else(|| BenchError::Config("no surrogate sizes".into()))?;
                    let rom = a.surrogate.response(&full, n);
                    let bias = if v == Variant::RbAdjusted { Some(a.bias_for(n)?) } else { None };
                    run_inversion(v, rom.as_ref(), &obs.data(), &noise, &prior, bias, &inv)?
                }
            };
            res.write_json(&dir.join(format!("{}.json", variant.as_str())))?;
            res.write_csv(&dir.join(format!("{}.csv", variant.as_str())))?;
            out.push(res);
        }
        Ok(out)
    })?
}
