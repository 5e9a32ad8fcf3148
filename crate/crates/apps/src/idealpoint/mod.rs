//! Bayesian probit ideal-point estimation from roll-call votes.
//!
//! A legislator `i` has a position `x_i ∈ ℝ^d`; a roll call `j` has a
//! discrimination `β_j` and a difficulty `α_j`. The Gibbs sampler alternates
//! latent utilities, item parameters and ideal points. Independent chains run
//! as a task farm, one chain per task.

pub mod data;
pub mod gibbs;
pub mod truncnorm;

use parapat_core::taskmap::{parallel_solve_problem, ProblemHooks};
use parapat_core::{Comm, Result};

pub use data::{generate_synthetic, vote_probability, RollCallMatrix, SyntheticTruth};
pub use gibbs::{
    normalize_ideal_points, run_gibbs, sample_ideal_points, sample_item_params, sample_ystar, sign_aligned_spearman,
    spearman, ChainState, GibbsConfig, GibbsSummary,
};

/// Task-farm hooks: task `k` runs a chain seeded with `cfg.seed + k`.
#[derive(Debug, Clone)]
pub struct MultiChain<'a> {
    pub data: &'a RollCallMatrix,
    pub cfg: GibbsConfig,
    pub chains: usize,
}

impl ProblemHooks for MultiChain<'_> {
    type Input = u64;
    type Output = GibbsSummary;
    type Summary = Vec<GibbsSummary>;

    fn initialize(&mut self) -> Result<Vec<u64>> {
        self.cfg.validate()?;
        Ok((0..self.chains as u64).collect())
    }

    fn task(&self, chain: &u64) -> Result<GibbsSummary> {
        let cfg = GibbsConfig {
            seed: self.cfg.seed.wrapping_add(*chain),
            ..self.cfg.clone()
        };
        run_gibbs(self.data, &cfg)
    }

    fn finalize(&mut self, outputs: Vec<GibbsSummary>) -> Result<Vec<GibbsSummary>> {
        Ok(outputs)
    }
}

/// Runs `chains` chains across the group; rank 0 gets them in chain order.
pub fn run_multichain(
    data: &RollCallMatrix,
    cfg: &GibbsConfig,
    chains: usize,
    comm: &Comm,
) -> Result<Option<Vec<GibbsSummary>>> {
    let mut hooks = MultiChain {
        data,
        cfg: cfg.clone(),
        chains,
    };
    parallel_solve_problem(&mut hooks, comm)
}
