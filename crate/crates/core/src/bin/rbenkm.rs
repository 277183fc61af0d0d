use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rbenkm::bench::{
    compare_variants, invert_once, load_offline, offline_pipeline, run_study, BenchError, ExperimentConfig, PipelineStatus,
    StatsSummary,
};
use rbenkm::enkm::Variant;

#[derive(Parser)]
#[command(name = "rbenkm", version, about = "Ensemble Kalman inversion with bias-adjusted reduced-basis surrogates")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Verb {
    /// Build snapshots, reduced bases, operators and bias moments.
    Offline,
    /// One inversion per configured variant at the first sweep point.
    Invert,
    /// Replicated inversions over the configured sweep.
    Study,
    /// Compare variants of a finished study.
    Compare,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, BenchError> {
    let path = cli.config.as_ref().ok_or_else(|| BenchError::Config("--config <file> is required".into()))?;
    let mut config = ExperimentConfig::load(path)?;
    if let Some(s) = cli.seed {
        config.seed = s;
    }
    if let Some(w) = cli.workers {
        config.workers = w;
    }
    if let Some(o) = &cli.out {
        config.out_dir = o.clone();
    }
    config.validate()?;
    Ok(config)
}

fn needs_offline(config: &ExperimentConfig) -> bool {
    config.variants.iter().any(|v| *v != Variant::Full)
}

fn run(cli: &Cli) -> Result<(), BenchError> {
    let config = load_config(cli)?;
    match cli.verb {
        Verb::Offline => {
            let (artifacts, status) = offline_pipeline(&config)?;
            let m = &artifacts.manifest;
            match status {
                PipelineStatus::Built => println!("built offline artifacts in {}", config.out_dir.join("offline").display()),
                PipelineStatus::UpToDate => println!("offline artifacts are up to date"),
            }
            println!("surrogate sizes with bias moments: {:?}", m.basis_sizes);
            if let Some(c) = m.convergence.last() {
                println!("largest surrogate ({}): max relative test error {:.3e}", c.size, c.max_space_time);
            }
            for b in &m.bias {
                println!("bias at size {}: |mean|_inf {:.3e}, trace {:.3e}", b.size, b.mean_inf, b.covariance_trace);
            }
        }
        Verb::Invert => {
            let artifacts = if needs_offline(&config) { Some(load_offline(&config)?) } else { None };
            for res in invert_once(&config, artifacts.as_ref())? {
                println!(
                    "{:<12} iterations {:>2} stop {:?} estimate {:?}",
                    res.variant.as_str(),
                    res.iterations(),
                    res.stop_reason,
                    res.estimate
                );
            }
        }
        Verb::Study => {
            let artifacts = if needs_offline(&config) { Some(load_offline(&config)?) } else { None };
            let summary = run_study(&config, artifacts.as_ref())?;
            print!("{}", summary.summary_csv());
        }
        Verb::Compare => {
            let dir = config.out_dir.join("study");
            let summary = StatsSummary::read(&dir)?;
            let table = compare_variants(&[summary])?;
            let write = |name: &str, text: String| {
                let p = dir.join(name);
                std::fs::write(&p, text).map_err(|e| BenchError::Io(format!("{}: {e}", p.display())))
            };
            write("verdict.csv", table.to_csv())?;
            write("verdict.json", serde_json::to_string_pretty(&table).map_err(|e| BenchError::Io(e.to_string()))?)?;
            print!("{}", table.render());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
