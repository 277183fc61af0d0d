//! Six-region log-conductivity inversion from tracer concentrations with a
//! small head/concentration surrogate.

use std::time::Instant;

use rbenkm::bench::{offline_pipeline, ExperimentConfig, FullOrder};
use rbenkm::enkm::{run_inversion, InversionConfig, Variant};
use rbenkm::observe::{synthesize_data, NoiseModel};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = tempfile::tempdir()?;
    let mut config = ExperimentConfig { out_dir: out.path().to_path_buf(), ..ExperimentConfig::tracer() };
    config.offline.train_size = 40;
    config.offline.head_size = 20;
    config.offline.concentration_size = 60;
    let clock = Instant::now();
    let (artifacts, _) = offline_pipeline(&config)?;
    let m = artifacts.manifest.basis_sizes[0];
    println!("offline: N = 20, M = {m} in {:.1}s", clock.elapsed().as_secs_f64());
    if let Some(b) = artifacts.manifest.bias.first() {
        println!("bias: |mean|_inf {:.2e}, trace {:.2e}", b.mean_inf, b.covariance_trace);
    }

    let full = FullOrder::new(&config)?;
    let fom = full.forward();
    let rom = artifacts.surrogate.response(&full, m);
    let noise = NoiseModel::isotropic(1e-3, fom.num_measurements())?;
    let y = synthesize_data(|p: &[f64]| fom.respond(p), &config.mu_star, &noise, config.seed)?.data();
    let inv = InversionConfig { ensemble_size: 40, policy: config.study.policy.clone(), perturbation: config.study.perturbation, seed: 5 };
    let prior = full.prior();
    println!("mu*        {:?}", config.mu_star);
    for (variant, b) in [(Variant::RbBiased, None), (Variant::RbAdjusted, Some(artifacts.bias_for(m)?))] {
        let res = run_inversion(variant, rom.as_ref(), &y, &noise, &prior, b, &inv)?;
        let shown: Vec<String> = res.estimate.iter().map(|v| format!("{v:.3}")).collect();
        println!("{:<12} [{}] after {} iterations", variant.as_str(), shown.join(", "), res.iterations());
    }
    Ok(())
}
