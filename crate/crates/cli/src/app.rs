//! What each rank runs for a given application, and what rank 0 reports.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use parapat_apps::dmc::{run_dmc, write_trace_csv, DmcConfig};
use parapat_apps::idealpoint::{
    generate_synthetic, run_multichain, sign_aligned_spearman, GibbsConfig, RollCallMatrix,
};
use parapat_apps::parabola::{write_pairs_csv, ParabolaConfig, ParabolaSweep};
use parapat_apps::poisson::{run_poisson, write_field_csv, Grid2D, PoissonConfig};
use parapat_core::partition::simple_partitioning;
use parapat_core::population::TimingSource;
use parapat_core::taskmap::{parallel_solve_problem, ProblemHooks};
use parapat_core::{Comm, Error, Payload, Result};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

/// Application and its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "app", rename_all = "lowercase")]
pub enum AppSpec {
    Parabola {
        m: usize,
        n: usize,
        length: f64,
    },
    Idealpoint {
        legislators: usize,
        votes: usize,
        iters: usize,
        burnin: usize,
        chains: usize,
        dims: usize,
        data: Option<PathBuf>,
    },
    Dmc {
        walkers: usize,
        steps: usize,
        tau: f64,
        diffusion: f64,
        dim: usize,
        burnin: Option<usize>,
    },
    Poisson {
        nx: usize,
        ny: usize,
        overlap: usize,
        threshold: f64,
        max_iter: usize,
    },
    /// Task farm of fixed-length sleeps, for measuring framework overhead.
    Sleep { tasks: usize, ms: u64 },
}

impl AppSpec {
    pub fn name(&self) -> &'static str {
        match self {
            AppSpec::Parabola { .. } => "parabola",
            AppSpec::Idealpoint { .. } => "idealpoint",
            AppSpec::Dmc { .. } => "dmc",
            AppSpec::Poisson { .. } => "poisson",
            AppSpec::Sleep { .. } => "sleep",
        }
    }
}

/// Everything a rank needs to take part in a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub app: AppSpec,
    pub seed: u64,
    pub timing: TimingSource,
    /// Where rank 0 writes the application's CSV output.
    pub csv: Option<PathBuf>,
}

/// Rank 0's view of a finished run.
#[derive(Debug, Clone, PartialEq)]
pub struct AppOutput {
    pub result: Value,
    pub counts: Value,
    /// Seconds each rank spent in the application, by rank.
    pub wall_time_s: Vec<f64>,
}

/// Lower-case hex SHA-256.
pub fn digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn to_json<T: Serialize>(value: &T) -> Result<Value> {
    serde_json::to_value(value).map_err(|e| Error::App(format!("serializing result: {e}")))
}

fn create_csv(path: &std::path::Path) -> Result<std::io::BufWriter<std::fs::File>> {
    let file = std::fs::File::create(path).map_err(|e| Error::App(format!("{}: {e}", path.display())))?;
    Ok(std::io::BufWriter::new(file))
}

struct SleepFarm {
    tasks: usize,
    pause: Duration,
}

impl ProblemHooks for SleepFarm {
    type Input = u64;
    type Output = u64;
    type Summary = usize;

    fn initialize(&mut self) -> Result<Vec<u64>> {
        Ok((0..self.tasks as u64).collect())
    }

    fn task(&self, input: &u64) -> Result<u64> {
        std::thread::sleep(self.pause);
        Ok(*input)
    }

    fn finalize(&mut self, outputs: Vec<u64>) -> Result<usize> {
        if outputs.iter().enumerate().any(|(i, &o)| o != i as u64) {
            return Err(Error::App("sleep tasks came back out of order".into()));
        }
        Ok(outputs.len())
    }
}

/// Runs `spec` as this rank. Collective; rank 0 gets `Some`.
pub fn execute(spec: &RunSpec, comm: &Comm) -> Result<Option<AppOutput>> {
    let start = Instant::now();
    let outcome = run_app(spec, comm)?;
    let wall = start.elapsed().as_secs_f64();
    let walls = comm.all_gather_value(&wall)?;
    Ok(outcome.map(|(result, counts)| AppOutput {
        result,
        counts,
        wall_time_s: walls,
    }))
}

fn tasks_per_rank(tasks: usize, comm: &Comm) -> Result<Value> {
    Ok(json!({ "tasks_per_rank": simple_partitioning(tasks, comm.size())? }))
}

fn run_app(spec: &RunSpec, comm: &Comm) -> Result<Option<(Value, Value)>> {
    match &spec.app {
        AppSpec::Parabola { m, n, length } => {
            let cfg = ParabolaConfig::new(*m, *n, *length)?;
            let tasks = cfg.m * cfg.m;
            let Some(sweep) = parallel_solve_problem(&mut ParabolaSweep::new(cfg), comm)? else {
                return Ok(None);
            };
            if let Some(path) = &spec.csv {
                write_pairs_csv(create_csv(path)?, &sweep.pairs)?;
            }
            let result = json!({
                "tasks": tasks,
                "pairs": sweep.pairs.len(),
                "finalize_input_digest": digest(Payload::encode(&sweep.outputs).as_bytes()),
            });
            Ok(Some((result, tasks_per_rank(tasks, comm)?)))
        }
        AppSpec::Idealpoint {
            legislators,
            votes,
            iters,
            burnin,
            chains,
            dims,
            data,
        } => {
            let (matrix, truth) = match data {
                Some(path) => (RollCallMatrix::from_path(path)?, None),
                None => {
                    let (m, t) = generate_synthetic(*legislators, *votes, *dims, spec.seed)?;
                    (m, Some(t))
                }
            };
            let cfg = GibbsConfig {
                dims: *dims,
                ..GibbsConfig::new(*iters, *burnin, spec.seed)
            };
            if *chains == 0 {
                return Err(Error::InvalidArgument("need at least one chain".into()));
            }
            let Some(summaries) = run_multichain(&matrix, &cfg, *chains, comm)? else {
                return Ok(None);
            };
            if let Some(path) = &spec.csv {
                write_ideal_points_csv(path, &summaries)?;
            }
            let recovery = match (&truth, *dims) {
                (Some(t), 1) => Some(
                    summaries
                        .iter()
                        .map(|s| sign_aligned_spearman(&s.x_mean, &t.x))
                        .collect::<Result<Vec<f64>>>()?,
                ),
                _ => None,
            };
            let mut agreement = f64::INFINITY;
            if *dims == 1 {
                for (a, sa) in summaries.iter().enumerate() {
                    for sb in &summaries[a + 1..] {
                        agreement = agreement.min(sign_aligned_spearman(&sa.x_mean, &sb.x_mean)?);
                    }
                }
            }
            let result = json!({
                "legislators": matrix.legislators(),
                "roll_calls": matrix.roll_calls(),
                "chains": summaries.len(),
                "samples_per_chain": summaries.first().map(|s| s.samples),
                "spearman_vs_truth": recovery,
                "min_cross_chain_spearman": agreement.is_finite().then_some(agreement),
                "summaries_digest": digest(Payload::encode(&summaries).as_bytes()),
                "x_mean": summaries.iter().map(|s| s.x_mean.clone()).collect::<Vec<_>>(),
            });
            Ok(Some((result, tasks_per_rank(*chains, comm)?)))
        }
        AppSpec::Dmc {
            walkers,
            steps,
            tau,
            diffusion,
            dim,
            burnin,
        } => {
            let cfg = DmcConfig {
                nwalkers: *walkers,
                nspacedim: *dim,
                stepsize: *tau,
                timesteps: *steps,
                diffusion: *diffusion,
                seed: spec.seed,
                ..DmcConfig::default()
            };
            cfg.validate()?;
            let burn_in = burnin.unwrap_or_else(|| cfg.default_burn_in());
            let run = run_dmc(&cfg, burn_in, comm, spec.timing)?;
            let counts = json!({
                "initial_per_rank": simple_partitioning(cfg.nwalkers, comm.size())?,
                "per_step": run.steps.iter().map(|s| s.counts.clone()).collect::<Vec<_>>(),
                "rebalances": run.steps.iter().filter(|s| s.rebalanced).count(),
                "transfers": run.steps.iter().map(|s| s.transfers).sum::<usize>(),
            });
            let Some(res) = run.result else {
                return Ok(None);
            };
            if let Some(path) = &spec.csv {
                write_trace_csv(create_csv(path)?, &res.trace)?;
            }
            let trace = serde_json::to_vec(&res.trace).map_err(|e| Error::App(e.to_string()))?;
            let result = json!({
                "energy": res.estimate.energy,
                "standard_error": res.estimate.standard_error,
                "exact_ground_state": cfg.nspacedim as f64 * cfg.diffusion.sqrt(),
                "burn_in": res.burn_in,
                "steps": res.trace.len(),
                "final_population": res.trace.last().map(|o| o.population),
                "clamp_events": res.clamp_events,
                "trace_digest": digest(&trace),
            });
            Ok(Some((result, counts)))
        }
        AppSpec::Poisson {
            nx,
            ny,
            overlap,
            threshold,
            max_iter,
        } => {
            let cfg = PoissonConfig {
                nx: *nx,
                ny: *ny,
                overlap: *overlap,
                threshold: *threshold,
                max_iter: *max_iter,
            };
            let Some(report) = run_poisson(&cfg, comm)? else {
                return Ok(None);
            };
            if let Some(path) = &spec.csv {
                write_field_csv(create_csv(path)?, &Grid2D::new(cfg.nx, cfg.ny)?, &report.field)?;
            }
            let mut result = to_json(&report)?;
            result["field_digest"] = json!(digest(Payload::encode(&report.field).as_bytes()));
            let columns = simple_partitioning(cfg.nx, comm.size())?;
            Ok(Some((result, json!({ "columns_per_rank": columns }))))
        }
        AppSpec::Sleep { tasks, ms } => {
            let mut farm = SleepFarm {
                tasks: *tasks,
                pause: Duration::from_millis(*ms),
            };
            let Some(done) = parallel_solve_problem(&mut farm, comm)? else {
                return Ok(None);
            };
            Ok(Some((json!({ "tasks": done }), tasks_per_rank(*tasks, comm)?)))
        }
    }
}

fn write_ideal_points_csv(path: &std::path::Path, summaries: &[parapat_apps::idealpoint::GibbsSummary]) -> Result<()> {
    let mut out = create_csv(path)?;
    let io = |e: std::io::Error| Error::App(format!("{}: {e}", path.display()));
    use std::io::Write;
    writeln!(out, "chain,legislator,dimension,x_mean,x_sd").map_err(io)?;
    for (c, s) in summaries.iter().enumerate() {
        for (k, (mean, sd)) in s.x_mean.iter().zip(&s.x_sd).enumerate() {
            writeln!(
                out,
                "{c},{},{},{},{}",
                k / s.dims,
                k % s.dims,
                parapat_apps::numfmt::format_g17(*mean),
                parapat_apps::numfmt::format_g17(*sd)
            )
            .map_err(io)?;
        }
    }
    out.flush().map_err(io)
}
