//! Config-driven simulation runs. Every run is a pure function of the config
//! and master seed: replicas use `derive_replica_seed`, run in parallel, and
//! are merged in replica order.

mod config;
mod coverage;
mod fixpoint;
mod qq;
mod width_threshold;

pub use config::{
    support_pattern, ExperimentConfig, FixedPointMethod, GridSpec, HistogramSettings, InstanceSpec, Placement, WidthSettings,
};
pub use coverage::{run_coverage_experiment, CoverageLevel, CoverageSummary};
pub use fixpoint::{run_fixed_point_validation, FixedPointSummary};
pub use qq::{run_qq_experiment, QqGroupStats, QqSummary};
pub use width_threshold::{run_width_threshold_experiment, CellSummary, WidthThresholdSummary};

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::seed::{derive_replica_seed, SeedSpec};
use crate::stats::quantile;

pub const SCHEMA_VERSION: u32 = 1;

/// Tidy long-format results: one row per (replica, coordinate, group, metric).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultTable {
    pub schema_version: u32,
    pub experiment: String,
    pub rows: Vec<ResultRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub replica: Option<usize>,
    pub coordinate: Option<usize>,
    pub group: String,
    pub metric: String,
    pub value: f64,
}

impl ResultTable {
    pub fn new(experiment: &str) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            experiment: experiment.into(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, replica: Option<usize>, coordinate: Option<usize>, group: &str, metric: &str, value: f64) {
        self.rows.push(ResultRow {
            replica,
            coordinate,
            group: group.into(),
            metric: metric.into(),
            value,
        });
    }

    /// Values of `metric` (optionally restricted to `group`) in row order.
    pub fn values(&self, metric: &str, group: Option<&str>) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.metric == metric && group.is_none_or(|g| r.group == g))
            .map(|r| r.value)
            .collect()
    }

    pub fn to_csv(&self) -> CsvTable {
        let mut t = CsvTable::new("results.csv", &["experiment", "replica", "coordinate", "group", "metric", "value"]);
        let opt = |v: Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.rows {
            t.push(vec![
                self.experiment.clone(),
                opt(r.replica),
                opt(r.coordinate),
                r.group.clone(),
                r.metric.clone(),
                r.value.to_string(),
            ]);
        }
        t
    }
}

/// A plain CSV file; `schema_version` is prepended as the first column on write.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self {
            name: name.into(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(dir.join(&self.name))?;
        let mut head = vec!["schema_version".to_string()];
        head.extend(self.header.iter().cloned());
        w.write_record(&head)?;
        let v = SCHEMA_VERSION.to_string();
        for row in &self.rows {
            w.write_record(std::iter::once(&v).chain(row.iter()))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Everything a run produces.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentRun<S> {
    #[serde(skip)]
    pub results: ResultTable,
    #[serde(skip)]
    pub tables: Vec<CsvTable>,
    pub summary: S,
    pub flagged: Vec<FlaggedReplica>,
    pub n_sim: usize,
    pub master_seed: u64,
    pub elapsed_sec: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlaggedReplica {
    pub replica: usize,
    pub reason: String,
}

impl<S: Serialize> ExperimentRun<S> {
    /// Writes `results.csv`, the auxiliary tables, and `summary.json`.
    pub fn write(&self, dir: &Path, config: &ExperimentConfig) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.results.to_csv().write(dir)?;
        for t in &self.tables {
            t.write(dir)?;
        }
        let json = serde_json::json!({
            "schema_version": SCHEMA_VERSION,
            "experiment": self.results.experiment,
            "master_seed": self.master_seed,
            "n_sim": self.n_sim,
            "flagged_count": self.flagged.len(),
            "flagged": self.flagged,
            "timings": { "total_sec": self.elapsed_sec },
            "metrics": self.summary,
            "config": config,
        });
        let text = serde_json::to_string_pretty(&json).map_err(|e| Error::Config(e.to_string()))?;
        std::fs::write(dir.join("summary.json"), text + "\n")?;
        Ok(())
    }

    pub fn flagged_count(&self) -> usize {
        self.flagged.len()
    }
}

/// Outcome of one replica; numerical failures flag the replica instead of aborting.
pub(crate) enum Replica<T> {
    Ok(T),
    Flagged(String),
}

/// Runs `f` for replicas `0..n_sim` in parallel and returns outcomes in replica order.
pub(crate) fn run_replicas<T, F>(n_sim: usize, seed: SeedSpec, f: F) -> Vec<Replica<T>>
where
    T: Send,
    F: Fn(usize, SeedSpec) -> Result<Option<T>> + Sync,
{
    (0..n_sim)
        .into_par_iter()
        .map(|r| match f(r, derive_replica_seed(seed, r as u64)) {
            Ok(Some(v)) => Replica::Ok(v),
            Ok(None) => Replica::Flagged("solver did not converge".into()),
            Err(e) => Replica::Flagged(e.to_string()),
        })
        .collect()
}

/// Splits replica outcomes into kept values (with indices) and flags.
pub(crate) fn partition<T>(outcomes: Vec<Replica<T>>) -> (Vec<(usize, T)>, Vec<FlaggedReplica>) {
    let mut kept = Vec::new();
    let mut flagged = Vec::new();
    for (r, o) in outcomes.into_iter().enumerate() {
        match o {
            Replica::Ok(v) => kept.push((r, v)),
            Replica::Flagged(reason) => flagged.push(FlaggedReplica { replica: r, reason }),
        }
    }
    if !flagged.is_empty() {
        log::warn!("{} replicas flagged and excluded", flagged.len());
    }
    (kept, flagged)
}

pub(crate) fn finish<S>(
    results: ResultTable,
    tables: Vec<CsvTable>,
    summary: S,
    flagged: Vec<FlaggedReplica>,
    cfg: &ExperimentConfig,
    start: Instant,
) -> ExperimentRun<S> {
    ExperimentRun {
        results,
        tables,
        summary,
        flagged,
        n_sim: cfg.n_sim,
        master_seed: cfg.seed,
        elapsed_sec: start.elapsed().as_secs_f64(),
    }
}

/// Sorted values against standard normal quantiles at (i + 1/2)/m.
pub(crate) fn qq_rows(table: &mut CsvTable, labels: &[&str], values: &[f64]) {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = sorted.len() as f64;
    for (i, v) in sorted.iter().enumerate() {
        let mut row: Vec<String> = labels.iter().map(|s| s.to_string()).collect();
        row.push(i.to_string());
        row.push(v.to_string());
        row.push(quantile((i as f64 + 0.5) / m).to_string());
        table.push(row);
    }
}

/// Fixed bins over [−range, range]; values outside land in the edge bins.
pub(crate) fn histogram_rows(table: &mut CsvTable, labels: &[&str], values: &[f64], h: &HistogramSettings) {
    let width = 2.0 * h.range / h.bins as f64;
    let mut counts = vec![0usize; h.bins];
    for &v in values {
        let k = ((v + h.range) / width).floor();
        let k = if k < 0.0 { 0 } else { (k as usize).min(h.bins - 1) };
        counts[k] += 1;
    }
    for (k, c) in counts.into_iter().enumerate() {
        let mut row: Vec<String> = labels.iter().map(|s| s.to_string()).collect();
        row.push((-h.range + k as f64 * width).to_string());
        row.push((-h.range + (k + 1) as f64 * width).to_string());
        row.push(c.to_string());
        table.push(row);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_csv_has_schema_column() {
        let mut t = ResultTable::new("demo");
        t.push(Some(0), None, "g", "m", 1.5);
        let dir = tempfile::tempdir().unwrap();
        t.to_csv().write(dir.path()).unwrap();
        let text = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "schema_version,experiment,replica,coordinate,group,metric,value");
        assert_eq!(lines.next().unwrap(), "1,demo,0,,g,m,1.5");
    }

    #[test]
    fn histogram_counts_everything() {
        let mut t = CsvTable::new("h.csv", &["g", "lo", "hi", "count"]);
        let h = HistogramSettings { bins: 4, range: 2.0 };
        histogram_rows(&mut t, &["a"], &[-9.0, -1.5, 0.0, 0.1, 1.99, 7.0], &h);
        let counts: Vec<usize> = t.rows.iter().map(|r| r[3].parse().unwrap()).collect();
        assert_eq!(counts, vec![2, 0, 2, 2]);
    }
}
