//! Prediction, sample moments and the Kalman analysis step.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bias::BiasMoments;
use super::{EnkmError, ForwardResponse};
use crate::observe::NoiseModel;
use crate::seeding::{stream, ALGORITHM_STREAM};

/// Forward responses of an ensemble; rows of failed particles are zero.
#[derive(Debug, Clone)]
pub struct Prediction {
    /// `J x Nm`
    pub responses: DMatrix<f64>,
    pub failed: Vec<usize>,
}

impl Prediction {
    pub fn succeeded(&self) -> Vec<usize> {
        (0..self.responses.nrows()).filter(|j| !self.failed.contains(j)).collect()
    }
}

/// Evaluates `G` for every particle in parallel. Up to 10% failures are
/// tolerated and reported; more abort the step.
pub fn predict(particles: &DMatrix<f64>, forward: &dyn ForwardResponse) -> Result<Prediction, EnkmError> {
    let j = particles.nrows();
    let nm = forward.num_measurements();
    let results: Vec<Result<DVector<f64>, String>> = (0..j)
        .into_par_iter()
        .map(|p| {
            let mu: Vec<f64> = particles.row(p).iter().cloned().collect();
            let r = forward.respond(&mu)?;
            if r.len() != nm || r.iter().any(|v| !v.is_finite()) {
                return Err(format!("particle {p}: response of length {} or non-finite", r.len()));
            }
            Ok(r)
        })
        .collect();
    let mut responses = DMatrix::zeros(j, nm);
    let mut failed = Vec::new();
    let mut first = None;
    for (p, r) in results.into_iter().enumerate() {
        match r {
            Ok(v) => responses.set_row(p, &v.transpose()),
            Err(e) => {
                log::warn!("forward evaluation failed for particle {p}: {e}");
                first.get_or_insert(e);
                failed.push(p);
            }
        }
    }
    if failed.len() * 10 > j {
        return Err(EnkmError::TooManyFailures { failed: failed.len(), total: j, first: first.unwrap_or_default() });
    }
    Ok(Prediction { responses, failed })
}

/// Sample means and (cross-)covariances with `1/J` normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    /// `Nm x Nm`
    pub p: DMatrix<f64>,
    /// `Np x Nm`
    pub q: DMatrix<f64>,
    pub response_mean: DVector<f64>,
    pub particle_mean: DVector<f64>,
}

fn centred(m: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let mean = m.row_mean().transpose();
    let c = DMatrix::from_fn(m.nrows(), m.ncols(), |j, k| m[(j, k)] - mean[k]);
    (c, mean)
}

pub fn sample_moments(particles: &DMatrix<f64>, responses: &DMatrix<f64>) -> Result<Moments, EnkmError> {
    let j = particles.nrows();
    if j < 2 || responses.nrows() != j {
        return Err(EnkmError::InvalidInput(format!("{j} particles vs {} responses", responses.nrows())));
    }
    let (gc, response_mean) = centred(responses);
    let (mc, particle_mean) = centred(particles);
    let inv = 1.0 / j as f64;
    Ok(Moments { p: gc.tr_mul(&gc) * inv, q: mc.tr_mul(&gc) * inv, response_mean, particle_mean })
}

/// How perturbed data are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Perturbation {
    /// Independent draw per particle and iteration.
    #[default]
    PerParticle,
    /// One draw per iteration shared by all particles.
    Shared,
}

/// Diagnostics of one analysis step.
#[derive(Debug, Clone)]
pub struct KalmanStepReport {
    pub moments: Moments,
    /// `|d_j - G(mu_j)|` in the `Sigma^{-1}` norm for updated particles.
    pub misfits: Vec<f64>,
    /// Jitter added to the gain system (0 when none was needed).
    pub jitter: f64,
    /// Smallest eigenvalue of `P` divided by its trace.
    pub p_min_eigenvalue_ratio: f64,
}

/// Cholesky of `s`, adding `1e-12 tr(s)`, then 10x and 100x that, on
/// failure.
fn regularized_cholesky(s: DMatrix<f64>) -> Result<(Cholesky<f64, Dyn>, f64), EnkmError> {
    if let Some(ch) = Cholesky::new(s.clone()) {
        return Ok((ch, 0.0));
    }
    let trace = s.trace().abs().max(f64::MIN_POSITIVE);
    let mut jitter = 1e-12 * trace;
    for _ in 0..3 {
        let mut t = s.clone();
        for i in 0..t.nrows() {
            t[(i, i)] += jitter;
        }
        if let Some(ch) = Cholesky::new(t) {
            log::warn!("gain system regularized with jitter {jitter:e}");
            return Ok((ch, jitter));
        }
        jitter *= 10.0;
    }
    Err(EnkmError::Factorization { jitter: jitter / 10.0 })
}

/// Kalman update of the particles listed in `active` (all others keep their
/// state). Without bias: gain `Q (P + Sigma)^{-1}` and `d_j ~ N(y, Sigma)`.
/// With bias: gain `Q (P + Gamma + Sigma)^{-1}` and
/// `d_j ~ N(y - delta, Sigma + Gamma)`; `perturbation_noise` must then have
/// covariance `Sigma + Gamma`. Random draws come from substreams of
/// `(seed, iteration, particle)`.
#[allow(clippy::too_many_arguments)]
pub fn analysis_update(
    particles: &DMatrix<f64>,
    responses: &DMatrix<f64>,
    active: &[usize],
    y: &DVector<f64>,
    noise: &NoiseModel,
    bias: Option<&BiasMoments>,
    perturbation_noise: &NoiseModel,
    mode: Perturbation,
    seed: u64,
    iteration: u64,
) -> Result<(DMatrix<f64>, KalmanStepReport), EnkmError> {
    let nm = y.len();
    if responses.ncols() != nm || noise.dim() != nm || perturbation_noise.dim() != nm {
        return Err(EnkmError::InvalidInput(format!(
            "measurement dimensions differ: data {nm}, responses {}, noise {}",
            responses.ncols(),
            noise.dim()
        )));
    }
    if active.len() < 2 {
        return Err(EnkmError::InvalidInput("fewer than two usable particles".into()));
    }
    let sub_particles = particles.select_rows(active);
    let sub_responses = responses.select_rows(active);
    let moments = sample_moments(&sub_particles, &sub_responses)?;

    let mut s = moments.p.clone();
    let mut target = y.clone();
    if let Some(b) = bias {
        if b.mean.len() != nm {
            return Err(EnkmError::InvalidInput(format!("bias has {} entries, data {nm}", b.mean.len())));
        }
        s += &b.covariance;
        target -= &b.mean;
    }
    s += &noise.covariance;
    let (chol, jitter) = regularized_cholesky(s)?;

    let shared = match mode {
        Perturbation::Shared => Some(perturbation_noise.sample(&mut stream(seed, &[ALGORITHM_STREAM, 1, iteration]))),
        Perturbation::PerParticle => None,
    };
    let mut innov = DMatrix::zeros(nm, active.len());
    for (col, &j) in active.iter().enumerate() {
        let eta = match &shared {
            Some(e) => e.clone(),
            None => perturbation_noise.sample(&mut stream(seed, &[ALGORITHM_STREAM, 2, iteration, j as u64])),
        };
        let d = &target + eta - responses.row(j).transpose();
        innov.set_column(col, &d);
    }
    let misfits = (0..active.len()).map(|c| noise.weighted_norm(&innov.column(c).into_owned()).unwrap_or(f64::NAN)).collect();
    let x = chol.solve(&innov);
    // Q x as a combination of centred particles, so rounding stays in their span.
    let (mc, _) = centred(&sub_particles);
    let (gc, _) = centred(&sub_responses);
    let coeffs = (gc * x) / active.len() as f64;
    let delta = mc.tr_mul(&coeffs);
    let mut next = particles.clone();
    for (col, &j) in active.iter().enumerate() {
        for k in 0..next.ncols() {
            next[(j, k)] += delta[(k, col)];
        }
    }
    let eig = moments.p.clone().symmetric_eigenvalues();
    let trace = moments.p.trace();
    let ratio = if trace > 0.0 { eig.min() / trace } else { 0.0 };
    Ok((next, KalmanStepReport { moments, misfits, jitter, p_min_eigenvalue_ratio: ratio }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::enkm::FnResponse;

    #[test]
    fn hand_moments() {
        let m = sample_moments(&DMatrix::from_column_slice(2, 1, &[1.0, 3.0]), &DMatrix::from_column_slice(2, 1, &[2.0, 6.0])).unwrap();
        assert_eq!(m.particle_mean[0], 2.0);
        assert_eq!(m.response_mean[0], 4.0);
        assert_eq!(m.p[(0, 0)], 4.0);
        assert_eq!(m.q[(0, 0)], 2.0);
    }

    #[test]
    fn identical_responses_have_zero_covariance() {
        let m = sample_moments(&DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]), &DMatrix::from_element(3, 2, 5.0)).unwrap();
        assert_eq!(m.p.amax(), 0.0);
        assert_eq!(m.q.amax(), 0.0);
    }

    #[test]
    fn zero_cross_covariance_leaves_particles() {
        let particles = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]);
        let responses = DMatrix::from_element(3, 2, 5.0);
        let noise = NoiseModel::isotropic(0.1, 2).unwrap();
        let y = DVector::from_vec(vec![100.0, -100.0]);
        let (next, _) =
            analysis_update(&particles, &responses, &[0, 1, 2], &y, &noise, None, &noise, Perturbation::PerParticle, 1, 0).unwrap();
        assert_eq!(next, particles);
    }

    #[test]
    fn predict_reports_failures() {
        let f = FnResponse {
            measurements: 1,
            parameters: 1,
            f: |mu: &[f64]| if mu[0] < 0.0 { Err("negative".to_string()) } else { Ok(DVector::from_vec(vec![2.0 * mu[0]])) },
        };
        let mut particles = DMatrix::from_fn(20, 1, |j, _| j as f64);
        let p = predict(&particles, &f).unwrap();
        assert!(p.failed.is_empty());
        assert_eq!(p.responses[(7, 0)], 14.0);
        particles[(3, 0)] = -1.0;
        let p = predict(&particles, &f).unwrap();
        assert_eq!(p.failed, vec![3]);
        assert_eq!(p.succeeded().len(), 19);
        particles[(4, 0)] = -1.0;
        particles[(5, 0)] = -1.0;
        assert!(matches!(predict(&particles, &f), Err(EnkmError::TooManyFailures { failed: 3, .. })));
    }

    #[test]
    fn indefinite_system_gets_jitter_or_fails() {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let (_, jitter) = regularized_cholesky(s).unwrap();
        assert!(jitter > 0.0);
        assert!(regularized_cholesky(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0])).is_err());
    }
}
