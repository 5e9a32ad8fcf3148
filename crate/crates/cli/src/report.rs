//! JSON run reports and benchmark tables.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use parapat_core::population::TimingSource;
use parapat_core::{Backend, Error, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::app::{AppOutput, RunSpec};
use crate::launch::{launch, Launch};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub app: String,
    pub ranks: usize,
    pub backend: Backend,
    pub seed: u64,
    pub timing: TimingSource,
    pub parameters: Value,
    /// Seconds each rank spent in the application.
    pub wall_time_s: Vec<f64>,
    /// Slowest rank's time; the `T_P` of speedup figures.
    pub time_s: f64,
    /// Launch to finish, including process start-up.
    pub elapsed_s: f64,
    pub baseline_s: Option<f64>,
    pub speedup: Option<f64>,
    pub efficiency: Option<f64>,
    /// Per-rank task or walker counts.
    pub counts: Value,
    /// Application results. Independent of timing, rank count and backend
    /// wherever the application is.
    pub result: Value,
}

impl RunReport {
    pub fn new(spec: &RunSpec, how: &Launch, out: AppOutput, elapsed_s: f64) -> Self {
        let time_s = out.wall_time_s.iter().copied().fold(0.0, f64::max);
        let mut parameters = serde_json::to_value(&spec.app).unwrap_or(Value::Null);
        if let Some(map) = parameters.as_object_mut() {
            map.remove("app");
        }
        RunReport {
            app: spec.app.name().to_string(),
            ranks: how.procs,
            backend: how.backend,
            seed: spec.seed,
            timing: spec.timing,
            parameters,
            wall_time_s: out.wall_time_s,
            time_s,
            elapsed_s,
            baseline_s: None,
            speedup: None,
            efficiency: None,
            counts: out.counts,
            result: out.result,
        }
    }

    /// Fills speedup `T₁ / T_P` and efficiency `speedup / P`.
    pub fn with_baseline(mut self, baseline_s: f64) -> Self {
        let speedup = baseline_s / self.time_s;
        self.baseline_s = Some(baseline_s);
        self.speedup = Some(speedup);
        self.efficiency = Some(speedup / self.ranks as f64);
        self
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::App(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::App(format!("{}: {e}", path.display())))
    }
}

/// Launches one run and builds its report.
pub fn run(spec: &RunSpec, how: &Launch) -> Result<RunReport> {
    let start = Instant::now();
    let out = launch(spec, how)?;
    Ok(RunReport::new(spec, how, out, start.elapsed().as_secs_f64()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub procs: usize,
    pub time_s: f64,
    pub speedup: f64,
    pub efficiency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub app: String,
    pub backend: Backend,
    pub rows: Vec<BenchRow>,
    /// Whether every run produced the same `result`.
    pub results_identical: bool,
    pub runs: Vec<RunReport>,
}

/// Runs `spec` at each rank count in `procs_list` (ascending, starting at 1)
/// and measures speedup against the 1-rank run of this invocation.
pub fn bench(spec: &RunSpec, procs_list: &[usize], template: &Launch) -> Result<BenchReport> {
    if procs_list.first() != Some(&1) || procs_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(format!(
            "process list must start at 1 and increase strictly, got {procs_list:?}"
        )));
    }
    let mut runs = Vec::with_capacity(procs_list.len());
    for &procs in procs_list {
        let how = Launch {
            procs,
            ..template.clone()
        };
        runs.push(run(spec, &how)?);
    }
    let baseline = runs[0].time_s;
    let runs: Vec<RunReport> = runs.into_iter().map(|r| r.with_baseline(baseline)).collect();
    let rows = runs
        .iter()
        .map(|r| BenchRow {
            procs: r.ranks,
            time_s: r.time_s,
            speedup: r.speedup.unwrap_or(f64::NAN),
            efficiency: r.efficiency.unwrap_or(f64::NAN),
        })
        .collect();
    Ok(BenchReport {
        app: spec.app.name().to_string(),
        backend: template.backend,
        results_identical: runs.windows(2).all(|w| w[0].result == w[1].result),
        rows,
        runs,
    })
}

/// Writes the speedup table as CSV: `procs,time_s,speedup,efficiency`.
pub fn write_bench_csv<W: Write>(mut out: W, rows: &[BenchRow]) -> std::io::Result<()> {
    writeln!(out, "procs,time_s,speedup,efficiency")?;
    for r in rows {
        writeln!(out, "{},{},{},{}", r.procs, r.time_s, r.speedup, r.efficiency)?;
    }
    out.flush()
}
