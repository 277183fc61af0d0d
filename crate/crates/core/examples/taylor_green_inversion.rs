//! Full-order, biased and bias-adjusted inversion of the Taylor–Green
//! diffusivity with a greedy reduced basis.

use std::time::Instant;

use rbenkm::bench::{offline_pipeline, ExperimentConfig, FullOrder};
use rbenkm::enkm::{run_inversion, InversionConfig, Variant};
use rbenkm::observe::{relative_noise_scale, synthesize_data, NoiseModel};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = tempfile::tempdir()?;
    let config = ExperimentConfig { out_dir: out.path().to_path_buf(), ..ExperimentConfig::taylor_green() };
    let clock = Instant::now();
    let (artifacts, _) = offline_pipeline(&config)?;
    let n = artifacts.manifest.basis_sizes[0];
    println!("offline: N = {n} in {:.1}s", clock.elapsed().as_secs_f64());

    let full = FullOrder::new(&config)?;
    let fom = full.forward();
    let rom = artifacts.surrogate.response(&full, n);
    let clean = fom.respond(&config.mu_star)?;
    let noise = NoiseModel::isotropic(1e-5 * relative_noise_scale(&clean)?, clean.len())?;
    let y = synthesize_data(|m: &[f64]| fom.respond(m), &config.mu_star, &noise, config.seed)?.data();
    let inv = InversionConfig {
        ensemble_size: 40,
        policy: config.study.policy.clone(),
        perturbation: config.study.perturbation,
        seed: 11,
    };
    let prior = full.prior();
    let bias = artifacts.bias_for(n)?;
    for (variant, forward, b) in [
        (Variant::Full, fom, None),
        (Variant::RbBiased, rom.as_ref(), None),
        (Variant::RbAdjusted, rom.as_ref(), Some(bias)),
    ] {
        let clock = Instant::now();
        let res = run_inversion(variant, forward, &y, &noise, &prior, b, &inv)?;
        let err = (res.estimate[0] - config.mu_star[0]).abs() / config.mu_star[0];
        println!(
            "{:<12} estimate {:.6} relative error {err:.2e} after {} iterations ({:.1}s)",
            variant.as_str(),
            res.estimate[0],
            res.iterations(),
            clock.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
