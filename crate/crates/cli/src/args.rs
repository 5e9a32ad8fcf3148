//! Command-line grammar.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use parapat_core::population::TimingSource;
use parapat_core::Backend;

use crate::app::{AppSpec, RunSpec};

#[derive(Debug, Parser)]
#[command(name = "parapat", version, about = "Run and benchmark the parallel-pattern demo applications")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one application and write a JSON report.
    Run {
        #[command(subcommand)]
        app: AppCommand,
    },
    /// Run one application at several rank counts and tabulate speedup.
    Bench {
        #[command(subcommand)]
        app: AppCommand,
    },
    /// Internal: one rank of a multi-process sockets run.
    #[command(hide = true)]
    Worker {
        #[arg(long)]
        rank: usize,
        #[arg(long)]
        bootstrap: PathBuf,
        #[arg(long)]
        spec: String,
    },
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Number of ranks (run).
    #[arg(long, default_value_t = 1)]
    pub procs: usize,
    /// Comma-separated rank counts, ascending from 1 (bench).
    #[arg(long, value_delimiter = ',')]
    pub procs_list: Option<Vec<usize>>,
    #[arg(long, default_value = "threads")]
    pub backend: Backend,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// JSON report path; the report goes to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Application data as CSV (run), or the speedup table (bench).
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Work estimate for load balancing: `uniform` or `wall`.
    #[arg(long, default_value = "uniform")]
    pub timing: TimingSource,
    /// Earlier 1-rank report whose time is the speedup baseline (run).
    #[arg(long)]
    pub baseline: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum AppCommand {
    /// Least-squares parabola fits over an (a, b) grid.
    Parabola {
        #[arg(long, default_value_t = 100)]
        m: usize,
        #[arg(long, default_value_t = 50)]
        n: usize,
        /// Half-width of the parameter interval.
        #[arg(long = "L", default_value_t = 10.0)]
        length: f64,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Probit ideal points by Gibbs sampling, one chain per task.
    Idealpoint {
        #[arg(long, default_value_t = 50)]
        legislators: usize,
        #[arg(long, default_value_t = 200)]
        votes: usize,
        #[arg(long, default_value_t = 2000)]
        iters: usize,
        #[arg(long, default_value_t = 500)]
        burnin: usize,
        #[arg(long, default_value_t = 4)]
        chains: usize,
        #[arg(long, default_value_t = 1)]
        dims: usize,
        /// Roll-call CSV; synthetic votes are generated when omitted.
        #[arg(long)]
        data: Option<PathBuf>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Diffusion Monte Carlo for the harmonic trap.
    Dmc {
        #[arg(long, default_value_t = 1000)]
        walkers: usize,
        #[arg(long, default_value_t = 200)]
        steps: usize,
        #[arg(long, default_value_t = 0.1)]
        tau: f64,
        #[arg(long = "D", default_value_t = 1.0)]
        diffusion: f64,
        #[arg(long, default_value_t = 3)]
        dim: usize,
        /// Steps dropped from the estimate; a fifth of the run by default.
        #[arg(long)]
        burnin: Option<usize>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Overlapping-strip Schwarz solve of a 2D Poisson problem.
    Poisson {
        #[arg(long, default_value_t = 63)]
        nx: usize,
        /// Defaults to `nx`.
        #[arg(long)]
        ny: Option<usize>,
        #[arg(long, default_value_t = 4)]
        overlap: usize,
        #[arg(long, default_value_t = 1e-10)]
        threshold: f64,
        #[arg(long, default_value_t = 10_000)]
        max_iter: usize,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Task farm of fixed sleeps.
    Sleep {
        #[arg(long, default_value_t = 1000)]
        tasks: usize,
        #[arg(long, default_value_t = 10)]
        ms: u64,
        #[command(flatten)]
        common: CommonArgs,
    },
}

impl AppCommand {
    /// Splits into the application spec and the shared flags.
    pub fn into_parts(self) -> (AppSpec, CommonArgs) {
        match self {
            AppCommand::Parabola { m, n, length, common } => (AppSpec::Parabola { m, n, length }, common),
            AppCommand::Idealpoint {
                legislators,
                votes,
                iters,
                burnin,
                chains,
                dims,
                data,
                common,
            } => (
                AppSpec::Idealpoint {
                    legislators,
                    votes,
                    iters,
                    burnin,
                    chains,
                    dims,
                    data,
                },
                common,
            ),
            AppCommand::Dmc {
                walkers,
                steps,
                tau,
                diffusion,
                dim,
                burnin,
                common,
            } => (
                AppSpec::Dmc {
                    walkers,
                    steps,
                    tau,
                    diffusion,
                    dim,
                    burnin,
                },
                common,
            ),
            AppCommand::Poisson {
                nx,
                ny,
                overlap,
                threshold,
                max_iter,
                common,
            } => (
                AppSpec::Poisson {
                    nx,
                    ny: ny.unwrap_or(nx),
                    overlap,
                    threshold,
                    max_iter,
                },
                common,
            ),
            AppCommand::Sleep { tasks, ms, common } => (AppSpec::Sleep { tasks, ms }, common),
        }
    }
}

impl CommonArgs {
    pub fn spec(&self, app: AppSpec, csv: Option<PathBuf>) -> RunSpec {
        RunSpec {
            app,
            seed: self.seed,
            timing: self.timing,
            csv,
        }
    }
}
