//! Ensemble Kalman inversion on a linear two-parameter problem, compared
//! with the exact Gaussian posterior mean of the first update.

use nalgebra::{DMatrix, DVector};
use rbenkm::enkm::{
    run_inversion, FnResponse, InversionConfig, Perturbation, PriorSpec, TerminationPolicy, Variant,
};
use rbenkm::observe::NoiseModel;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let g = DMatrix::from_row_slice(3, 2, &[1.0, 0.5, -0.3, 2.0, 0.8, 0.8]);
    let mu_star = DVector::from_vec(vec![0.7, 1.3]);
    let y = &g * &mu_star;
    let noise = NoiseModel::isotropic(0.05, 3)?;
    let forward = FnResponse {
        measurements: 3,
        parameters: 2,
        f: |mu: &[f64]| Ok::<_, String>(&g * DVector::from_column_slice(mu)),
    };
    let prior = PriorSpec::new(vec![0.0, 0.0], vec![2.0, 2.0])?;
    let config = InversionConfig {
        ensemble_size: 200,
        policy: TerminationPolicy { update_threshold: Some(1e-4), discrepancy: None, max_iters: 20 },
        perturbation: Perturbation::PerParticle,
        seed: 3,
    };
    let result = run_inversion(Variant::Full, &forward, &y, &noise, &prior, None, &config)?;
    for r in &result.records {
        println!(
            "iter {:>2}: mean ({:.4}, {:.4}) std ({:.2e}, {:.2e}) misfit {:.3e}",
            r.iteration, r.mean[0], r.mean[1], r.std[0], r.std[1], r.misfit.unwrap_or(f64::NAN)
        );
    }

    // Gaussian approximation of the uniform prior for the first update.
    let c0 = DMatrix::from_diagonal_element(2, 2, 4.0 / 12.0);
    let m0 = DVector::from_element(2, 1.0);
    let s = &g * &c0 * g.transpose() + DMatrix::from_diagonal_element(3, 3, 0.05f64.powi(2));
    let gain = &c0 * g.transpose() * s.try_inverse().ok_or("singular innovation covariance")?;
    let m1 = &m0 + gain * (&y - &g * &m0);
    println!("Kalman mean after one step: ({:.4}, {:.4})", m1[0], m1[1]);
    println!("stopped by {:?} with estimate {:?}", result.stop_reason, result.estimate);
    Ok(())
}
