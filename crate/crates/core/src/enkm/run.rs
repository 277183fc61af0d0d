//! The iterative inversion loop and its termination rules.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::bias::BiasMoments;
use super::ensemble::{init_ensemble, PriorSpec};
use super::kalman::{analysis_update, predict, Perturbation};
use super::{EnkmError, ForwardResponse};
use crate::observe::NoiseModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Full-order forward model.
    Full,
    /// Reduced model substituted without correction.
    RbBiased,
    /// Reduced model with bias-adjusted data and gain.
    RbAdjusted,
}

impl Variant {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Full => "full",
            Self::RbBiased => "rb_biased",
            Self::RbAdjusted => "rb_adjusted",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "full" => Some(Self::Full),
            "rb_biased" => Some(Self::RbBiased),
            "rb_adjusted" => Some(Self::RbAdjusted),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TerminationPolicy {
    /// Stop when `|mean_{n+1} - mean_n| <= tau |mean_{n+1}|`; `None` or a
    /// non-positive value disables it.
    pub update_threshold: Option<f64>,
    /// Stop when `|y - G(mean_n)|_{Sigma^{-1}} <= sigma_disc sqrt(Nm)`.
    pub discrepancy: Option<f64>,
    pub max_iters: usize,
}

impl Default for TerminationPolicy {
    fn default() -> Self {
        Self { update_threshold: Some(1e-6), discrepancy: None, max_iters: 10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    UpdateThreshold,
    Discrepancy,
    MaxIterations,
}

/// Summary of the ensemble after iteration `iteration` (0 is the prior).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// `|mean_n - mean_{n-1}|`
    pub update_norm: Option<f64>,
    /// Average perturbed-data misfit of the previous ensemble.
    pub misfit: Option<f64>,
    /// `|y - G(mean_n)|_{Sigma^{-1}}` when the discrepancy rule is active.
    pub mean_misfit: Option<f64>,
    pub failed: usize,
    pub jitter: f64,
    /// Smallest eigenvalue of `P_n` over its trace.
    pub p_min_eigenvalue_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InversionConfig {
    pub ensemble_size: usize,
    pub policy: TerminationPolicy,
    pub perturbation: Perturbation,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InversionResult {
    pub variant: Variant,
    pub seed: u64,
    pub ensemble_size: usize,
    pub records: Vec<IterationRecord>,
    pub estimate: Vec<f64>,
    pub stop_reason: Option<StopReason>,
    pub initial: DMatrix<f64>,
    pub particles: DMatrix<f64>,
}

impl InversionResult {
    pub fn iterations(&self) -> usize {
        self.records.len() - 1
    }

    pub fn to_json(&self) -> Result<String, EnkmError> {
        serde_json::to_string_pretty(self).map_err(|e| EnkmError::Io(e.to_string()))
    }

    pub fn write_json(&self, path: &Path) -> Result<(), EnkmError> {
        std::fs::write(path, self.to_json()?).map_err(|e| EnkmError::Io(format!("{}: {e}", path.display())))
    }

    pub fn read_json(path: &Path) -> Result<Self, EnkmError> {
        let text = std::fs::read_to_string(path).map_err(|e| EnkmError::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| EnkmError::Io(e.to_string()))
    }

    /// One row per iteration: means, standard deviations and diagnostics.
    pub fn write_csv(&self, path: &Path) -> Result<(), EnkmError> {
        let io = |e: csv::Error| EnkmError::Io(e.to_string());
        let mut w = csv::Writer::from_path(path).map_err(io)?;
        let np = self.estimate.len();
        let mut header = vec!["iteration".to_string()];
        header.extend((0..np).map(|k| format!("mean_{k}")));
        header.extend((0..np).map(|k| format!("std_{k}")));
        header.extend(["update_norm", "misfit", "failed"].map(String::from));
        w.write_record(&header).map_err(io)?;
        let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
        for r in &self.records {
            let mut row = vec![r.iteration.to_string()];
            row.extend(r.mean.iter().map(|v| format!("{v:e}")));
            row.extend(r.std.iter().map(|v| format!("{v:e}")));
            row.extend([opt(r.update_norm), opt(r.misfit), r.failed.to_string()]);
            w.write_record(&row).map_err(io)?;
        }
        w.flush().map_err(|e| EnkmError::Io(e.to_string()))
    }
}

/// Decides whether to stop after the last record in `history`.
pub fn check_termination(history: &[IterationRecord], policy: &TerminationPolicy, nm: usize) -> Option<StopReason> {
    let last = history.last()?;
    if let (Some(s), Some(m)) = (policy.discrepancy, last.mean_misfit) {
        if m <= s * (nm as f64).sqrt() {
            return Some(StopReason::Discrepancy);
        }
    }
    if let (Some(tau), Some(u)) = (policy.update_threshold, last.update_norm) {
        let scale = last.mean.iter().map(|v| v * v).sum::<f64>().sqrt();
        if tau > 0.0 && u <= tau * scale {
            return Some(StopReason::UpdateThreshold);
        }
    }
    if last.iteration >= policy.max_iters {
        return Some(StopReason::MaxIterations);
    }
    None
}

fn stats(particles: &DMatrix<f64>) -> (Vec<f64>, Vec<f64>) {
    let mean = particles.row_mean().iter().cloned().collect();
    let std = particles.row_variance().iter().map(|v| v.sqrt()).collect();
    (mean, std)
}

/// Runs the ensemble Kalman iteration for one variant. `forward` is the
/// full-order map for [`Variant::Full`] and the reduced one otherwise;
/// `bias` is required exactly for [`Variant::RbAdjusted`].
pub fn run_inversion(
    variant: Variant,
    forward: &dyn ForwardResponse,
    y: &DVector<f64>,
    noise: &NoiseModel,
    prior: &PriorSpec,
    bias: Option<&BiasMoments>,
    config: &InversionConfig,
) -> Result<InversionResult, EnkmError> {
    let nm = y.len();
    if forward.num_measurements() != nm || noise.dim() != nm {
        return Err(EnkmError::InvalidInput(format!(
            "data has {nm} entries, model {}, noise {}",
            forward.num_measurements(),
            noise.dim()
        )));
    }
    if forward.num_parameters() != prior.dim() {
        return Err(EnkmError::InvalidInput(format!("model has {} parameters, prior {}", forward.num_parameters(), prior.dim())));
    }
    match (variant, bias) {
        (Variant::RbAdjusted, None) => return Err(EnkmError::InvalidInput("the adjusted variant needs bias moments".into())),
        (Variant::Full | Variant::RbBiased, Some(_)) => {
            return Err(EnkmError::InvalidInput(format!("variant {} takes no bias moments", variant.as_str())))
        }
        _ => {}
    }
    let perturbation_noise = match bias {
        Some(b) if b.covariance.amax() > 0.0 => NoiseModel::new(&noise.covariance + &b.covariance)?,
        _ => noise.clone(),
    };

    let ensemble = init_ensemble(prior, config.ensemble_size, config.seed)?;
    let initial = ensemble.particles.clone();
    let mut particles = initial.clone();
    let (mean, std) = stats(&particles);
    let mut records = vec![IterationRecord {
        iteration: 0,
        mean,
        std,
        update_norm: None,
        misfit: None,
        mean_misfit: None,
        failed: 0,
        jitter: 0.0,
        p_min_eigenvalue_ratio: None,
    }];
    let partial = |records: &Vec<IterationRecord>, particles: &DMatrix<f64>, reason: Option<StopReason>| InversionResult {
        variant,
        seed: config.seed,
        ensemble_size: config.ensemble_size,
        records: records.clone(),
        estimate: records.last().map(|r| r.mean.clone()).unwrap_or_default(),
        stop_reason: reason,
        initial: initial.clone(),
        particles: particles.clone(),
    };
    let abort = |n: usize, e: EnkmError, records: &Vec<IterationRecord>, particles: &DMatrix<f64>| EnkmError::Aborted {
        iteration: n,
        reason: e.to_string(),
        partial: Box::new(partial(records, particles, None)),
    };

    let mut stop = None;
    let mut n = 0;
    while stop.is_none() {
        n += 1;
        let pred = predict(&particles, forward).map_err(|e| abort(n, e, &records, &particles))?;
        let active = pred.succeeded();
        let (next, report) = analysis_update(
            &particles,
            &pred.responses,
            &active,
            y,
            noise,
            bias,
            &perturbation_noise,
            config.perturbation,
            config.seed,
            n as u64,
        )
        .map_err(|e| abort(n, e, &records, &particles))?;
        let prev_mean = DVector::from_column_slice(&records.last().expect("prior record").mean);
        particles = next;
        let (mean, std) = stats(&particles);
        let update = (DVector::from_column_slice(&mean) - prev_mean).norm();
        let mean_misfit = match config.policy.discrepancy {
            Some(_) => {
                let g = forward.respond(&mean).map_err(|e| abort(n, EnkmError::InvalidInput(e), &records, &particles))?;
                Some(noise.weighted_norm(&(y - g))?)
            }
            None => None,
        };
        records.push(IterationRecord {
            iteration: n,
            mean,
            std,
            update_norm: Some(update),
            misfit: Some(report.misfits.iter().sum::<f64>() / report.misfits.len() as f64),
            mean_misfit,
            failed: pred.failed.len(),
            jitter: report.jitter,
            p_min_eigenvalue_ratio: Some(report.p_min_eigenvalue_ratio),
        });
        log::debug!("{} iteration {n}: update {update:.3e}", variant.as_str());
        stop = check_termination(&records, &config.policy, nm);
    }
    Ok(partial(&records, &particles, stop))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::enkm::FnResponse;

    fn record(iteration: usize, mean: f64, update: Option<f64>) -> IterationRecord {
        IterationRecord {
            iteration,
            mean: vec![mean],
            std: vec![0.0],
            update_norm: update,
            misfit: None,
            mean_misfit: None,
            failed: 0,
            jitter: 0.0,
            p_min_eigenvalue_ratio: None,
        }
    }

    #[test]
    fn termination_rules() {
        let p = TerminationPolicy { update_threshold: Some(1e-3), discrepancy: None, max_iters: 5 };
        assert_eq!(check_termination(&[record(0, 1.0, None)], &p, 1), None);
        assert_eq!(check_termination(&[record(1, 1.0, Some(0.0))], &p, 1), Some(StopReason::UpdateThreshold));
        assert_eq!(check_termination(&[record(1, 1.0, Some(0.1))], &p, 1), None);
        assert_eq!(check_termination(&[record(5, 1.0, Some(0.1))], &p, 1), Some(StopReason::MaxIterations));
        let mut r = record(1, 1.0, Some(0.1));
        r.mean_misfit = Some(1.0);
        let d = TerminationPolicy { discrepancy: Some(1.2), ..p };
        assert_eq!(check_termination(&[r], &d, 1), Some(StopReason::Discrepancy));
    }

    #[test]
    fn zero_threshold_runs_to_max_iterations() {
        let g = FnResponse { measurements: 2, parameters: 1, f: |mu: &[f64]| Ok(DVector::from_vec(vec![mu[0], 2.0 * mu[0]])) };
        let noise = NoiseModel::isotropic(1e-3, 2).unwrap();
        let prior = PriorSpec::new(vec![0.0], vec![1.0]).unwrap();
        let cfg = InversionConfig {
            ensemble_size: 20,
            policy: TerminationPolicy { update_threshold: Some(0.0), discrepancy: None, max_iters: 5 },
            perturbation: Perturbation::PerParticle,
            seed: 3,
        };
        let y = DVector::from_vec(vec![0.3, 0.6]);
        let res = run_inversion(Variant::Full, &g, &y, &noise, &prior, None, &cfg).unwrap();
        assert_eq!(res.iterations(), 5);
        assert_eq!(res.stop_reason, Some(StopReason::MaxIterations));
        assert!((res.estimate[0] - 0.3).abs() < 1e-2);
    }

    #[test]
    fn variant_and_bias_must_agree() {
        let g = FnResponse { measurements: 1, parameters: 1, f: |mu: &[f64]| Ok(DVector::from_vec(vec![mu[0]])) };
        let noise = NoiseModel::isotropic(1e-3, 1).unwrap();
        let prior = PriorSpec::new(vec![0.0], vec![1.0]).unwrap();
        let cfg = InversionConfig { ensemble_size: 4, policy: TerminationPolicy::default(), perturbation: Perturbation::PerParticle, seed: 1 };
        let y = DVector::from_vec(vec![0.5]);
        assert!(run_inversion(Variant::RbAdjusted, &g, &y, &noise, &prior, None, &cfg).is_err());
        let b = BiasMoments::zero(1);
        assert!(run_inversion(Variant::RbBiased, &g, &y, &noise, &prior, Some(&b), &cfg).is_err());
    }

    #[test]
    fn failures_abort_with_partial_result() {
        let g = FnResponse {
            measurements: 1,
            parameters: 1,
            f: |mu: &[f64]| if mu[0] > 0.5 { Err("out of range".to_string()) } else { Ok(DVector::from_vec(vec![mu[0]])) },
        };
        let noise = NoiseModel::isotropic(1e-3, 1).unwrap();
        let prior = PriorSpec::new(vec![0.0], vec![1.0]).unwrap();
        let cfg = InversionConfig { ensemble_size: 10, policy: TerminationPolicy::default(), perturbation: Perturbation::PerParticle, seed: 1 };
        match run_inversion(Variant::Full, &g, &DVector::from_vec(vec![0.2]), &noise, &prior, None, &cfg) {
            Err(EnkmError::Aborted { iteration, partial, .. }) => {
                assert_eq!(iteration, 1);
                assert_eq!(partial.records.len(), 1);
            }
            other => panic!("expected abort, got {other:?}"),
        }
    }

    #[test]
    fn result_serializes() {
        let g = FnResponse { measurements: 1, parameters: 2, f: |mu: &[f64]| Ok(DVector::from_vec(vec![mu[0] + mu[1]])) };
        let noise = NoiseModel::isotropic(1e-2, 1).unwrap();
        let prior = PriorSpec::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let cfg = InversionConfig {
            ensemble_size: 6,
            policy: TerminationPolicy { max_iters: 2, ..Default::default() },
            perturbation: Perturbation::Shared,
            seed: 4,
        };
        let res = run_inversion(Variant::Full, &g, &DVector::from_vec(vec![0.7]), &noise, &prior, None, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        res.write_json(&dir.path().join("r.json")).unwrap();
        assert_eq!(InversionResult::read_json(&dir.path().join("r.json")).unwrap(), res);
        res.write_csv(&dir.path().join("r.csv")).unwrap();
        let text = std::fs::read_to_string(dir.path().join("r.csv")).unwrap();
        assert!(text.starts_with("iteration,mean_0,mean_1,std_0,std_1,update_norm,misfit,failed"));
        assert_eq!(text.lines().count(), res.records.len() + 1);
    }
}
