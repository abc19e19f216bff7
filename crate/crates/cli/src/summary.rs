//! Per-point medians and interquartile ranges.

use serde::{Deserialize, Serialize};

use crate::experiment::TrialRecord;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
}

impl Spread {
    /// Linear-interpolation quartiles of the finite values; NaN when empty.
    pub fn of(values: &[f64]) -> Self {
        let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
        v.sort_by(f64::total_cmp);
        let (q1, median, q3) = (quantile(&v, 0.25), quantile(&v, 0.5), quantile(&v, 0.75));
        Spread { median, q1, q3, iqr: q3 - q1 }
    }
}

/// Quantile of sorted data with linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let pos = q * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
        }
    }
}

pub fn median(values: &[f64]) -> f64 {
    Spread::of(values).median
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    pub sweep_value: f64,
    pub horizon: String,
    pub trials: usize,
    pub failures: usize,
    pub tight_fraction: f64,
    pub pos_err_pct: Spread,
    pub rot_err_deg: Spread,
    pub shape_err: Spread,
    pub gap: Spread,
    pub time_s: Spread,
}

/// Groups consecutive records of the same point, as produced by the sweep.
pub fn summarize(records: &[TrialRecord]) -> Vec<PointSummary> {
    let mut out: Vec<PointSummary> = vec![];
    let mut start = 0;
    while start < records.len() {
        let key = (records[start].sweep_value, &records[start].horizon);
        let end = start
            + records[start..].iter().take_while(|r| (r.sweep_value, &r.horizon) == key).count();
        let group = &records[start..end];
        let ok: Vec<&TrialRecord> = group.iter().filter(|r| !r.failed()).collect();
        let field = |f: fn(&TrialRecord) -> f64| Spread::of(&ok.iter().map(|r| f(r)).collect::<Vec<_>>());
        out.push(PointSummary {
            sweep_value: key.0,
            horizon: key.1.clone(),
            trials: group.len(),
            failures: group.len() - ok.len(),
            tight_fraction: if ok.is_empty() {
                0.0
            } else {
                ok.iter().filter(|r| r.tight).count() as f64 / ok.len() as f64
            },
            pos_err_pct: field(|r| r.pos_err_pct),
            rot_err_deg: field(|r| r.rot_err_deg),
            shape_err: field(|r| r.shape_err),
            gap: field(|r| r.gap),
            time_s: field(|r| r.time_s),
        });
        start = end;
    }
    out
}
