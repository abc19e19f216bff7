use cast_cli::config::{ExperimentConfig, Horizon, SweepAxis, SweepPoint, Unsmoothed};
use cast_cli::summary::quantile;
use cast_cli::{collect_trials, run_sweep, run_trial, write_csv, CSV_HEADER};
use cast_core::qcqp::build_problem;
use cast_core::simulate::{NoiseConfig, ScenarioConfig};
use cast_core::{precompute_shape_operators, ShapeLibrary};

fn small_config() -> ExperimentConfig {
    ExperimentConfig {
        scenario: ScenarioConfig { horizon: 3, ..ScenarioConfig::default() },
        sweep: SweepAxis::MeasurementNoise,
        values: vec![0.01, 0.05, 0.1],
        trials: 2,
        horizons: vec![Horizon::Frames(3)],
        seed: 11,
        workers: 2,
        ..ExperimentConfig::default()
    }
}

fn csv_without_time(records: &[cast_cli::TrialRecord]) -> String {
    let mut buf = vec![];
    write_csv(records, &mut buf).unwrap();
    let time_col = CSV_HEADER.iter().position(|h| *h == "time_s").unwrap();
    String::from_utf8(buf)
        .unwrap()
        .lines()
        .map(|l| l.split(',').enumerate().filter(|(k, _)| *k != time_col).map(|(_, f)| f).collect::<Vec<_>>().join(","))
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn three_points_two_trials_give_six_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_sweep(&small_config(), dir.path()).unwrap();
    let text = std::fs::read_to_string(&out.csv_path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 7);
    assert_eq!(lines[0], CSV_HEADER.join(","));
    let order: Vec<(String, String)> = lines[1..]
        .iter()
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].to_string(), f[2].to_string())
        })
        .collect();
    let expected: Vec<(String, String)> = ["0.01", "0.05", "0.1"]
        .iter()
        .flat_map(|v| ["0", "1"].map(|t| (v.to_string(), t.to_string())))
        .collect();
    assert_eq!(order, expected);
}

#[test]
fn summary_medians_match_csv_recomputation() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_sweep(&ExperimentConfig { trials: 3, ..small_config() }, dir.path()).unwrap();
    let mut reader = csv::Reader::from_path(&out.csv_path).unwrap();
    let headers = reader.headers().unwrap().clone();
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let rows: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out.summary_path).unwrap()).unwrap();
    let points = summary.as_array().unwrap();
    assert_eq!(points.len(), 3);
    for point in points {
        let value = point["sweep_value"].as_f64().unwrap();
        for metric in ["pos_err_pct", "rot_err_deg", "shape_err", "gap"] {
            let mut xs: Vec<f64> = rows
                .iter()
                .filter(|r| r[col("sweep_value")].parse::<f64>().unwrap() == value)
                .map(|r| r[col(metric)].parse::<f64>().unwrap())
                .collect();
            xs.sort_by(f64::total_cmp);
            let m = xs.len();
            let by_hand = if m % 2 == 1 { xs[m / 2] } else { 0.5 * (xs[m / 2 - 1] + xs[m / 2]) };
            let reported = point[metric]["median"].as_f64().unwrap();
            assert!((reported - by_hand).abs() <= 1e-12 * by_hand.abs().max(1.0), "{metric}: {reported} vs {by_hand}");
            assert_eq!(quantile(&xs, 0.5), by_hand);
        }
    }
}

#[test]
fn identical_seeds_give_identical_records() {
    let config = small_config();
    let a = collect_trials(&config).unwrap();
    let b = collect_trials(&ExperimentConfig { workers: 1, ..config.clone() }).unwrap();
    assert_eq!(csv_without_time(&a), csv_without_time(&b));
    let c = collect_trials(&ExperimentConfig { seed: 12, ..config }).unwrap();
    assert_ne!(csv_without_time(&a), csv_without_time(&c));
}

#[test]
fn zero_noise_trial_is_exact_and_tight() {
    let config = ExperimentConfig {
        scenario: ScenarioConfig { shape: Some(vec![0.25; 4]), ..ScenarioConfig::default() },
        noise: NoiseConfig::noiseless(),
        shape_weight: 0.01,
        ..ExperimentConfig::default()
    };
    let point = SweepPoint { value_index: 0, value: 0.0, horizon: Horizon::Frames(4) };
    let r = run_trial(&config, &ShapeLibrary::bundled(), &point, 0);
    assert_eq!(r.status, "ok");
    assert!(r.pos_err_pct < 1e-3, "{r:?}");
    assert!(r.gap.abs() < 1e-6, "{r:?}");
}

#[test]
fn zero_outlier_ratio_prunes_nothing() {
    let config = ExperimentConfig { sweep: SweepAxis::OutlierRatio, ..small_config() };
    let point = SweepPoint { value_index: 0, value: 0.0, horizon: Horizon::Frames(3) };
    let r = run_trial(&config, &ShapeLibrary::bundled(), &point, 0);
    assert_eq!((r.prune_removed, r.gnc_iters, r.outliers_injected), (0, 0, 0));
}

#[test]
fn unsmoothed_variant_emits_no_smoothing_terms() {
    let config = ExperimentConfig { unsmoothed_horizon: 4, ..ExperimentConfig::default() };
    let weights = config.smoother_weights(Horizon::Unsmoothed(Unsmoothed::U), &config.noise).unwrap();
    assert!(weights.velocity.iter().chain(&weights.rotation_rate).all(|&w| w == 0.0));

    let lib = ShapeLibrary::bundled();
    let s = cast_core::simulate::Scenario::generate(
        &ScenarioConfig { horizon: 4, ..ScenarioConfig::default() },
        &lib,
        &NoiseConfig::default(),
    )
    .unwrap();
    let ops = precompute_shape_operators(&lib, &s.measurements, weights.shape).unwrap();
    let problem = build_problem(&s.measurements, &lib, &ops, &weights).unwrap();
    assert!(problem.p.iter().all(|&x| x == 0.0));
    // Rotation rates only enter the cost through their smoothing terms.
    let layout = &problem.layout;
    for t in 0..3 {
        for k in layout.rate(t)..layout.rate(t) + 9 {
            assert!(problem.q.row(k).iter().all(|&x| x == 0.0));
        }
    }
}
