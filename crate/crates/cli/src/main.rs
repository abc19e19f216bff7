use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cast_cli::config::{ExperimentConfig, SweepAxis};
use cast_cli::tools::{certificate_matches, certify_dump, prune_measurements};
use cast_cli::{run_sweep, CliError, Result};
use cast_core::qcqp::{build_problem, write_dump};
use cast_core::relax::{Certificate, SolverSettings};
use cast_core::robust::TimePairPolicy;
use cast_core::simulate::{LibrarySource, NoiseConfig, Scenario, ScenarioConfig};
use cast_core::{precompute_shape_operators, ShapeLibrary, SmootherWeights};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "cast", version, about = "Certifiable shape and pose tracking experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo sweep and write results.csv and summary.json.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
        /// Sweep axis when no config file is given.
        #[arg(long, value_enum)]
        sweep: Option<Axis>,
    },
    /// Re-solve a dumped problem and report its certificate.
    Certify {
        #[arg(long)]
        problem: PathBuf,
        /// Stored certificate JSON to check against the recomputation.
        #[arg(long)]
        certificate: Option<PathBuf>,
    },
    /// Compatibility pruning of a measurement file.
    Prune {
        #[arg(long)]
        measurements: PathBuf,
        /// Shape library JSON; the bundled library when absent.
        #[arg(long)]
        library: Option<PathBuf>,
        #[arg(long, default_value_t = 0.03)]
        epsilon: f64,
        /// Compare every frame pair instead of anchor and predecessor.
        #[arg(long)]
        all_pairs: bool,
    },
    /// Write a synthetic instance: measurements JSON and its problem dump.
    Simulate {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 4)]
        horizon: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Keypoint noise std as a fraction of the characteristic length.
        #[arg(long, default_value_t = 0.05)]
        noise: f64,
        #[arg(long, default_value_t = 0.0)]
        outlier_ratio: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Axis {
    MeasurementNoise,
    ProcessNoise,
    OutlierRatio,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn print_json<T: serde::Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("report types serialize"));
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run { config, out, trials, seed, workers, sweep } => {
            let mut cfg = match &config {
                Some(path) => ExperimentConfig::from_json(&read(path)?)?,
                None => ExperimentConfig::default(),
            };
            if let Some(axis) = sweep {
                cfg.sweep = match axis {
                    Axis::MeasurementNoise => SweepAxis::MeasurementNoise,
                    Axis::ProcessNoise => SweepAxis::ProcessNoise,
                    Axis::OutlierRatio => SweepAxis::OutlierRatio,
                };
                if config.is_none() {
                    cfg.values = cfg.sweep.default_values();
                }
            }
            cfg.trials = trials.unwrap_or(cfg.trials);
            cfg.seed = seed.unwrap_or(cfg.seed);
            cfg.workers = workers.unwrap_or(cfg.workers);
            let out = out
                .or_else(|| cfg.output.clone())
                .ok_or_else(|| CliError::Config("no output directory: pass --out or set `output`".into()))?;
            let result = run_sweep(&cfg, &out)?;
            let failures = result.records.iter().filter(|r| r.failed()).count();
            eprintln!(
                "{} trials ({failures} failed) -> {}, {}",
                result.records.len(),
                result.csv_path.display(),
                result.summary_path.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Certify { problem, certificate } => {
            let mut report = certify_dump(&read(&problem)?, &SolverSettings::default())?;
            let mut code = ExitCode::SUCCESS;
            if let Some(path) = certificate {
                let stored: Certificate = serde_json::from_str(&read(&path)?).map_err(|e| CliError::json(&path, e))?;
                let ok = certificate_matches(&stored, &report.certificate);
                report.matches_stored = Some(ok);
                if !ok {
                    code = ExitCode::FAILURE;
                }
            }
            print_json(&report);
            Ok(code)
        }
        Command::Prune { measurements, library, epsilon, all_pairs } => {
            let lib = match library {
                Some(path) => ShapeLibrary::from_json(&read(&path)?)?,
                None => ShapeLibrary::bundled(),
            };
            let policy = if all_pairs { TimePairPolicy::All } else { TimePairPolicy::AnchorAndPredecessor };
            print_json(&prune_measurements(&read(&measurements)?, &lib, epsilon, policy)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Simulate { out, horizon, seed, noise, outlier_ratio } => {
            let scenario_config = ScenarioConfig { horizon, library: LibrarySource::Bundled, ..ScenarioConfig::default() };
            let noise = NoiseConfig {
                measurement_sigma: noise * scenario_config.characteristic_length,
                outlier_ratio,
                rng_seed: seed,
                ..NoiseConfig::default()
            };
            let lib = ShapeLibrary::bundled();
            let s = Scenario::generate(&scenario_config, &lib, &noise)?;
            let weights = SmootherWeights::uniform(horizon, 1.0, 1.0, 0.1);
            let ops = precompute_shape_operators(&lib, &s.measurements, weights.shape)?;
            let problem = build_problem(&s.measurements, &lib, &ops, &weights)?;
            fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
            let meas_path = out.join("measurements.json");
            let text = serde_json::to_string(&s.measurements).map_err(|e| CliError::json(&meas_path, e))?;
            fs::write(&meas_path, text).map_err(|e| CliError::io(&meas_path, e))?;
            let dump_path = out.join("problem.qcqp");
            fs::write(&dump_path, write_dump(&problem)).map_err(|e| CliError::io(&dump_path, e))?;
            eprintln!("wrote {} and {}", meas_path.display(), dump_path.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
