//! Monte Carlo trials and parameter sweeps.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use cast_core::relax::solve_cast;
use cast_core::robust::{solve_robust, GncSettings, RobustSettings, TimePairPolicy};
use cast_core::simulate::Scenario;
use cast_core::{pose_metrics, ShapeLibrary};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, SweepPoint};
use crate::error::{CliError, Result};
use crate::summary::{summarize, PointSummary};

pub const CSV_HEADER: [&str; 14] = [
    "sweep_value",
    "horizon",
    "trial",
    "frame",
    "pos_err_pct",
    "rot_err_deg",
    "shape_err",
    "gap",
    "rel_gap",
    "tight",
    "prune_removed",
    "gnc_iters",
    "time_s",
    "status",
];

/// Final-frame result of one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub sweep_value: f64,
    pub horizon: String,
    pub trial: usize,
    pub frame: usize,
    pub pos_err_pct: f64,
    pub rot_err_deg: f64,
    pub shape_err: f64,
    pub gap: f64,
    pub rel_gap: f64,
    pub tight: bool,
    pub prune_removed: usize,
    pub gnc_iters: usize,
    pub time_s: f64,
    /// `ok`, `degraded` or `failed: <reason>`.
    pub status: String,
    pub outliers_injected: usize,
    /// Injected outliers removed by pruning.
    pub outliers_pruned: usize,
}

impl TrialRecord {
    pub fn failed(&self) -> bool {
        self.status.starts_with("failed")
    }

    fn csv_fields(&self) -> [String; 14] {
        [
            format!("{:?}", self.sweep_value),
            self.horizon.clone(),
            self.trial.to_string(),
            self.frame.to_string(),
            format!("{:?}", self.pos_err_pct),
            format!("{:?}", self.rot_err_deg),
            format!("{:?}", self.shape_err),
            format!("{:?}", self.gap),
            format!("{:?}", self.rel_gap),
            self.tight.to_string(),
            self.prune_removed.to_string(),
            self.gnc_iters.to_string(),
            format!("{:?}", self.time_s),
            self.status.clone(),
        ]
    }
}

/// Seed of trial `trial` at sweep value `value_index`; independent of the
/// horizon so variants at the same point see the same random draws.
pub fn trial_seed(seed: u64, value_index: usize, trial: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((value_index as u64) << 32) | trial as u64);
    rng.next_u64()
}

/// Simulates one instance and runs the estimator on it. Solver failures are
/// recorded in the row instead of aborting.
pub fn run_trial(config: &ExperimentConfig, lib: &ShapeLibrary, point: &SweepPoint, trial: usize) -> TrialRecord {
    let frames = config.frames(point.horizon);
    let noise = config.noise_at(point.value, trial_seed(config.seed, point.value_index, trial));
    let mut record = TrialRecord {
        sweep_value: point.value,
        horizon: point.horizon.to_string(),
        trial,
        frame: frames - 1,
        pos_err_pct: f64::NAN,
        rot_err_deg: f64::NAN,
        shape_err: f64::NAN,
        gap: f64::NAN,
        rel_gap: f64::NAN,
        tight: false,
        prune_removed: 0,
        gnc_iters: 0,
        time_s: 0.0,
        status: "ok".into(),
        outliers_injected: 0,
        outliers_pruned: 0,
    };
    let scenario_config = cast_core::simulate::ScenarioConfig { horizon: frames, ..config.scenario.clone() };
    let scenario = match Scenario::generate(&scenario_config, lib, &noise) {
        Ok(s) => s,
        Err(e) => {
            record.status = format!("failed: {e}");
            return record;
        }
    };
    record.outliers_injected = scenario.outliers.iter().filter(|&&o| o).count();

    let start = Instant::now();
    let result = config.smoother_weights(point.horizon, &noise).and_then(|weights| {
        if noise.outlier_ratio > 0.0 {
            let bound = config.epsilon_for(&noise);
            let robust = RobustSettings {
                epsilon: bound,
                time_pairs: TimePairPolicy::default(),
                gnc: GncSettings { noise_bound: bound, ..GncSettings::default() },
            };
            let out = solve_robust(&scenario.measurements, lib, &weights, &robust, &config.solver)?;
            record.prune_removed = out.prune.removed;
            record.outliers_pruned =
                scenario.outliers.iter().zip(&out.prune.mask).filter(|(o, kept)| **o && !**kept).count();
            record.gnc_iters = out.gnc.iterations;
            if out.gnc.degraded {
                record.status = "degraded".into();
            }
            Ok(out.gnc.estimate)
        } else {
            Ok(solve_cast(&scenario.measurements, lib, &weights, &config.solver)?)
        }
    });
    record.time_s = start.elapsed().as_secs_f64();

    match result {
        Ok(estimate) => {
            match pose_metrics(
                &estimate.trajectory,
                &scenario.truth,
                &estimate.shape,
                &scenario.shape,
                scenario.characteristic_length,
            ) {
                Ok(m) => {
                    (record.pos_err_pct, record.rot_err_deg) = m.last_frame();
                    record.shape_err = m.shape_error;
                }
                Err(e) => record.status = format!("failed: {e}"),
            }
            let cert = estimate.certificate;
            (record.gap, record.rel_gap, record.tight) = (cert.gap, cert.rel_gap, cert.tight);
        }
        Err(e) => {
            log::warn!("trial {trial} at {} (horizon {}) failed: {e}", point.value, point.horizon);
            record.status = format!("failed: {e}");
        }
    }
    record
}

/// Runs every trial of every sweep point on `config.workers` threads.
/// Records are ordered by (sweep point, trial) regardless of completion order.
pub fn collect_trials(config: &ExperimentConfig) -> Result<Vec<TrialRecord>> {
    config.validate()?;
    let lib = config.scenario.library.load()?;
    let jobs: Vec<(SweepPoint, usize)> =
        config.points().into_iter().flat_map(|p| (0..config.trials).map(move |k| (p, k))).collect();
    let results: Mutex<Vec<Option<TrialRecord>>> = Mutex::new(vec![None; jobs.len()]);
    let next = AtomicUsize::new(0);
    let workers = config.workers.clamp(1, jobs.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let idx = next.fetch_add(1, Ordering::Relaxed);
                let Some((point, trial)) = jobs.get(idx) else { break };
                let record = run_trial(config, &lib, point, *trial);
                log::info!(
                    "value {} horizon {} trial {}: rot {:.3}° pos {:.3}% ({})",
                    record.sweep_value,
                    record.horizon,
                    record.trial,
                    record.rot_err_deg,
                    record.pos_err_pct,
                    record.status
                );
                results.lock().expect("no worker panics while holding the lock")[idx] = Some(record);
            });
        }
    });
    Ok(results.into_inner().expect("workers joined").into_iter().map(|r| r.expect("every job ran")).collect())
}

pub fn write_csv<W: Write>(records: &[TrialRecord], out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(CSV_HEADER)?;
    for r in records {
        writer.write_record(r.csv_fields())?;
    }
    writer.flush().map_err(|e| CliError::Csv(e.into()))?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct SweepOutput {
    pub records: Vec<TrialRecord>,
    pub summary: Vec<PointSummary>,
    pub csv_path: PathBuf,
    pub summary_path: PathBuf,
}

/// Runs the sweep and writes `results.csv` and `summary.json` into `out_dir`.
pub fn run_sweep(config: &ExperimentConfig, out_dir: &Path) -> Result<SweepOutput> {
    let records = collect_trials(config)?;
    fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let csv_path = out_dir.join("results.csv");
    let file = fs::File::create(&csv_path).map_err(|e| CliError::io(&csv_path, e))?;
    write_csv(&records, std::io::BufWriter::new(file))?;

    let summary = summarize(&records);
    let summary_path = out_dir.join("summary.json");
    let text = serde_json::to_string_pretty(&summary).map_err(|e| CliError::json(&summary_path, e))?;
    fs::write(&summary_path, text).map_err(|e| CliError::io(&summary_path, e))?;
    Ok(SweepOutput { records, summary, csv_path, summary_path })
}
