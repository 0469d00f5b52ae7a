//! Path-following metrics and paired manual/cooperative batch runs.

use crate::engine::run;
use crate::operator::OperatorKind;
use crate::record::{RunRecord, RunStatus};
use crate::scenario::{Mode, Scenario, ScenarioError};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("record has no ticks")]
    EmptyRecord,
    #[error("seed list is empty")]
    NoSeeds,
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("thread pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    pub rmse_e2: f64,
    pub rmse_e3: f64,
    pub completion_time: f64,
    pub path_lost_fraction: f64,
    /// Fraction of ticks where the heading law or the vehicle limits saturated.
    pub saturation_fraction: f64,
}

/// Metrics over the true (ungated) errors of every recorded tick.
pub fn compute_metrics(record: &RunRecord) -> Result<Metrics, MetricsError> {
    let rows = &record.rows;
    if rows.is_empty() {
        return Err(MetricsError::EmptyRecord);
    }
    let n = rows.len() as f64;
    let rms = |f: fn(&crate::record::TickRow) -> f64| (rows.iter().map(|r| f(r).powi(2)).sum::<f64>() / n).sqrt();
    let fraction = |f: fn(&crate::record::TickRow) -> bool| rows.iter().filter(|r| f(r)).count() as f64 / n;
    Ok(Metrics {
        rmse_e2: rms(|r| r.e2),
        rmse_e3: rms(|r| r.e3),
        completion_time: record.terminal_time,
        path_lost_fraction: fraction(|r| !r.detected),
        saturation_fraction: fraction(|r| r.u_saturated || r.velocity_saturated),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub seed: u64,
    pub mode: Mode,
    pub metrics: Metrics,
    pub status: RunStatus,
}

pub const CSV_HEADER: &str =
    "seed,mode,rmse_e2,rmse_e3,completion_time,path_lost_fraction,saturation_fraction,status";

impl MetricsRow {
    pub fn csv_line(&self) -> String {
        let m = &self.metrics;
        format!(
            "{},{},{},{},{},{},{},{}",
            self.seed,
            self.mode,
            fmt_f64(m.rmse_e2),
            fmt_f64(m.rmse_e3),
            fmt_f64(m.completion_time),
            fmt_f64(m.path_lost_fraction),
            fmt_f64(m.saturation_fraction),
            self.status
        )
    }
}

/// Shortest representation that round-trips.
fn fmt_f64(x: f64) -> String {
    serde_json::to_string(&x).unwrap_or_else(|_| "NaN".into())
}

pub fn to_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&row.csv_line());
        out.push('\n');
    }
    out
}

/// One run per scenario, in input order.
pub fn batch(scenarios: &[Scenario], jobs: usize) -> Result<Vec<MetricsRow>, MetricsError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| MetricsError::Pool(e.to_string()))?;
    let results: Vec<Result<MetricsRow, MetricsError>> = pool.install(|| {
        scenarios
            .par_iter()
            .map(|sc| {
                let record = run(sc)?;
                let status = record.final_status();
                let metrics = compute_metrics(&record)?;
                Ok(MetricsRow {
                    seed: sc.seed,
                    mode: sc.mode,
                    metrics,
                    status,
                })
            })
            .collect()
    });
    results.into_iter().collect()
}

/// The scenario pair used for one seed: manual control with the manual
/// operator, cooperative control with the configured operator. Both share
/// the seed, so the operator noise streams are identical.
pub fn paired_scenarios(base: &Scenario, seed: u64) -> [Scenario; 2] {
    let mut mc = base.clone();
    mc.seed = seed;
    mc.mode = Mode::MC;
    mc.operator.kind = OperatorKind::ManualPd;
    let mut cc = base.clone();
    cc.seed = seed;
    cc.mode = Mode::CC;
    [mc, cc]
}

/// Paired MC/CC runs for every seed, ordered by (seed, mode).
pub fn compare(base: &Scenario, seeds: &[u64], jobs: usize) -> Result<Vec<MetricsRow>, MetricsError> {
    if seeds.is_empty() {
        return Err(MetricsError::NoSeeds);
    }
    base.validate()?;
    let mut seeds = seeds.to_vec();
    seeds.sort_unstable();
    seeds.dedup();
    let scenarios: Vec<Scenario> = seeds.iter().flat_map(|&s| paired_scenarios(base, s)).collect();
    batch(&scenarios, jobs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeSummary {
    pub mean_rmse_e2: f64,
    pub median_rmse_e2: f64,
    pub mean_rmse_e3: f64,
    pub median_rmse_e3: f64,
    pub mean_completion_time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareSummary {
    pub pairs: usize,
    pub mc: ModeSummary,
    pub cc: ModeSummary,
    pub cc_wins_e2: usize,
    pub cc_wins_e3: usize,
    /// Pairs where either run did not complete.
    pub incomplete: usize,
}

impl CompareSummary {
    pub fn win_fraction_e2(&self) -> f64 {
        self.cc_wins_e2 as f64 / self.pairs as f64
    }

    pub fn win_fraction_e3(&self) -> f64 {
        self.cc_wins_e3 as f64 / self.pairs as f64
    }

    pub fn line(&self) -> String {
        format!(
            "pairs={} cc_wins_e2={:.3} cc_wins_e3={:.3} mc_rmse_e2_mean={:.4} cc_rmse_e2_mean={:.4} \
             mc_rmse_e3_mean={:.4} cc_rmse_e3_mean={:.4} incomplete={}",
            self.pairs,
            self.win_fraction_e2(),
            self.win_fraction_e3(),
            self.mc.mean_rmse_e2,
            self.cc.mean_rmse_e2,
            self.mc.mean_rmse_e3,
            self.cc.mean_rmse_e3,
            self.incomplete
        )
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

fn mode_summary(rows: &[&MetricsRow]) -> ModeSummary {
    let e2: Vec<f64> = rows.iter().map(|r| r.metrics.rmse_e2).collect();
    let e3: Vec<f64> = rows.iter().map(|r| r.metrics.rmse_e3).collect();
    let t: Vec<f64> = rows.iter().map(|r| r.metrics.completion_time).collect();
    ModeSummary {
        mean_rmse_e2: mean(&e2),
        median_rmse_e2: median(&e2),
        mean_rmse_e3: mean(&e3),
        median_rmse_e3: median(&e3),
        mean_completion_time: mean(&t),
    }
}

/// Summarizes the output of [`compare`]. Returns `None` without any complete pair.
pub fn summarize(rows: &[MetricsRow]) -> Option<CompareSummary> {
    let mut pairs = Vec::new();
    for pair in rows.chunks(2) {
        if let [a, b] = pair {
            if a.seed == b.seed && a.mode == Mode::MC && b.mode == Mode::CC {
                pairs.push((a, b));
            }
        }
    }
    if pairs.is_empty() {
        return None;
    }
    let mc: Vec<&MetricsRow> = pairs.iter().map(|p| p.0).collect();
    let cc: Vec<&MetricsRow> = pairs.iter().map(|p| p.1).collect();
    Some(CompareSummary {
        pairs: pairs.len(),
        mc: mode_summary(&mc),
        cc: mode_summary(&cc),
        cc_wins_e2: pairs
            .iter()
            .filter(|(m, c)| c.metrics.rmse_e2 < m.metrics.rmse_e2)
            .count(),
        cc_wins_e3: pairs
            .iter()
            .filter(|(m, c)| c.metrics.rmse_e3 < m.metrics.rmse_e3)
            .count(),
        incomplete: pairs
            .iter()
            .filter(|(m, c)| m.status != RunStatus::Completed || c.status != RunStatus::Completed)
            .count(),
    })
}
