//! CSV outputs. Every file starts with a fixed header row; floats use the
//! shortest representation that round-trips.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use gainsched_core::{AggregateStats, BoundReport, Trajectory};

pub const TRAJECTORY_HEADER: [&str; 8] = ["run", "iter", "task", "J", "gain_est", "gain_oracle", "alpha", "comm_cum"];
pub const AGGREGATE_HEADER: [&str; 5] = ["iter", "mean_J", "se_J", "mean_rate", "se_rate"];
pub const BOUND_HEADER: [&str; 5] = ["iter", "bound", "empirical_mean", "empirical_se", "violated"];

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(csv::Writer::from_writer(BufWriter::new(file)))
}

/// Writes `header` followed by `rows`.
pub fn write_table<S: AsRef<str>>(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<S>>) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(header)?;
    for row in rows {
        debug_assert_eq!(row.len(), header.len());
        w.write_record(row.iter().map(|s| s.as_ref()))?;
    }
    w.flush().with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Trajectory rows: `iter = k` reports `J(w_k)` and the decision that
/// produced `w_k`, for `k = 1..=K`; `comm_cum` counts that task's
/// transmissions so far.
pub fn write_trajectories<'a>(path: &Path, runs: impl IntoIterator<Item = (usize, &'a Trajectory)>) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(TRAJECTORY_HEADER)?;
    for (run, t) in runs {
        let mut cumulative = vec![0usize; t.num_tasks()];
        for (k, step) in t.steps.iter().enumerate() {
            for (j, count) in cumulative.iter_mut().enumerate() {
                let alpha = step.decision.alphas[j];
                *count += alpha as usize;
                w.write_record([
                    run.to_string(),
                    (k + 1).to_string(),
                    j.to_string(),
                    step.costs[j].to_string(),
                    step.gain_estimated[j].to_string(),
                    step.gain_oracle[j].to_string(),
                    (alpha as u8).to_string(),
                    count.to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// One row per `k = 0..=K`: mean task-averaged cost `J(w_k)` and the mean
/// transmissions per step over the first `k` steps.
pub fn write_aggregate(path: &Path, stats: &AggregateStats) -> Result<()> {
    let rows = (0..=stats.horizon()).map(|k| {
        vec![
            k.to_string(),
            stats.mean_cost[k].to_string(),
            stats.se_cost[k].to_string(),
            stats.mean_rate[k].to_string(),
            stats.se_rate[k].to_string(),
        ]
    });
    write_table(path, &AGGREGATE_HEADER, rows)
}

pub fn write_bound_report(path: &Path, report: &BoundReport) -> Result<()> {
    let rows = report.rows.iter().map(|r| {
        vec![
            r.iter.to_string(),
            r.bound.to_string(),
            r.empirical_mean.to_string(),
            r.empirical_se.to_string(),
            r.violated.to_string(),
        ]
    });
    write_table(path, &BOUND_HEADER, rows)
}

/// Uniform-bin counts of several series over a shared range.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    /// `bins + 1` increasing edges.
    pub edges: Vec<f64>,
    /// One count vector per series.
    pub counts: Vec<Vec<usize>>,
}

impl Histogram {
    /// Bins span `range`, or the pooled `[min, max]` when `None`. Values
    /// outside an explicit range are not counted.
    pub fn new(series: &[&[f64]], bins: usize, range: Option<[f64; 2]>) -> Self {
        assert!(bins >= 1);
        let [lo, hi] = range.unwrap_or_else(|| {
            let (lo, hi) = series
                .iter()
                .flat_map(|s| s.iter().copied())
                .filter(|v| v.is_finite())
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
            match (lo.is_finite(), lo < hi) {
                (true, true) => [lo, hi],
                (true, false) => [lo - 0.5, lo + 0.5],
                _ => [0.0, 1.0],
            }
        });
        let width = (hi - lo) / bins as f64;
        let edges = (0..=bins)
            .map(|i| if i == bins { hi } else { lo + i as f64 * width })
            .collect();
        let counts = series
            .iter()
            .map(|s| {
                let mut c = vec![0usize; bins];
                for &v in s.iter() {
                    if !(v >= lo && v <= hi) {
                        continue;
                    }
                    let idx = (((v - lo) / width) as usize).min(bins - 1);
                    c[idx] += 1;
                }
                c
            })
            .collect();
        Self { edges, counts }
    }

    pub fn bins(&self) -> usize {
        self.edges.len() - 1
    }

    /// Columns `bin_lo,bin_hi,<name...>`.
    pub fn write_csv(&self, path: &Path, names: &[&str]) -> Result<()> {
        let mut header = vec!["bin_lo", "bin_hi"];
        header.extend_from_slice(names);
        let rows = (0..self.bins()).map(|b| {
            let mut row = vec![self.edges[b].to_string(), self.edges[b + 1].to_string()];
            row.extend(self.counts.iter().map(|c| c[b].to_string()));
            row
        });
        write_table(path, &header, rows)
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    f.write_all(text.as_bytes())?;
    Ok(())
}
