//! Offline phase, replicated study and variant comparison on a coarse
//! Taylor–Green setup, written to a temporary directory.

use rbenkm::bench::{compare_variants, offline_pipeline, run_study, ExperimentConfig, PipelineStatus};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = tempfile::tempdir()?;
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/smoke.toml"))?;
    let mut config = ExperimentConfig::from_toml(&text)?;
    config.out_dir = out.path().to_path_buf();
    config.study.noise_levels = vec![1e-2, 1e-3];
    config.study.replicates = 4;

    let (artifacts, status) = offline_pipeline(&config)?;
    println!("offline artifacts: {status:?}, sizes {:?}", artifacts.manifest.basis_sizes);
    let (_, again) = offline_pipeline(&config)?;
    assert_eq!(again, PipelineStatus::UpToDate);

    let summary = run_study(&config, Some(&artifacts))?;
    print!("{}", summary.summary_csv());
    let table = compare_variants(&[summary])?;
    print!("{}", table.render());
    println!("outputs in {}", out.path().join("study").display());
    Ok(())
}
