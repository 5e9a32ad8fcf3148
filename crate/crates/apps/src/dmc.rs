//! Diffusion Monte Carlo for non-interacting particles in a harmonic trap.
//!
//! With `H = −D∇² + V`, `V(r) = r²` and `D = 1` the exact ground-state
//! energy in three dimensions is 3. Walkers diffuse with per-coordinate
//! variance `2Dτ` and branch with weight
//! `exp(−((V_old + V_new)/2 − E_T) τ)`; the trial energy `E_T` steers the
//! population toward its target size.

use std::io::Write;

use parapat_core::codec::Codec;
use parapat_core::partition::{simple_partitioning, subproblem_offset};
use parapat_core::population::{
    parallel_time_integration, time_integration, MigrationSlice, ParallelRun, Population, TimingSource,
};
use parapat_core::{Comm, CodecError, Error, Payload, Rank, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::numfmt::format_g17;

/// Largest branch weight applied in one step.
pub const MAX_BRANCH_WEIGHT: f64 = 10.0;
/// Gain of the trial-energy feedback.
pub const FEEDBACK_GAIN: f64 = 0.1;
pub const ESTIMATE_BLOCKS: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct DmcConfig {
    pub nwalkers: usize,
    pub nspacedim: usize,
    /// Imaginary-time step τ.
    pub stepsize: f64,
    pub timesteps: usize,
    pub diffusion: f64,
    /// Leading fraction of steps dropped from the estimate when no explicit
    /// burn-in is given.
    pub burn_in_fraction: f64,
    pub threshold_factor: f64,
    pub seed: u64,
}

impl Default for DmcConfig {
    fn default() -> Self {
        DmcConfig {
            nwalkers: 1000,
            nspacedim: 3,
            stepsize: 0.1,
            timesteps: 200,
            diffusion: 1.0,
            burn_in_fraction: 0.2,
            threshold_factor: 1.1,
            seed: 0,
        }
    }
}

impl DmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.nwalkers == 0 || self.nspacedim == 0 {
            return Err(Error::InvalidArgument("walkers and dimensions must be positive".into()));
        }
        if !(self.stepsize > 0.0 && self.diffusion > 0.0) {
            return Err(Error::InvalidArgument("stepsize and diffusion constant must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.burn_in_fraction) {
            return Err(Error::InvalidArgument("burn-in fraction must be in [0, 1)".into()));
        }
        if self.threshold_factor.is_nan() || self.threshold_factor <= 1.0 {
            return Err(Error::InvalidArgument("threshold factor must exceed 1".into()));
        }
        Ok(())
    }

    pub fn default_burn_in(&self) -> usize {
        (self.burn_in_fraction * self.timesteps as f64).floor() as usize
    }
}

/// `V = Σ x²` per walker for row-major positions with `dim` coordinates.
pub fn harmonic_potential(positions: &[f64], dim: usize) -> Vec<f64> {
    positions.chunks(dim).map(|p| p.iter().map(|x| x * x).sum()).collect()
}

/// Real-valued branch weight before clamping.
pub fn branch_weight(v_old: f64, v_new: f64, trial_energy: f64, tau: f64) -> f64 {
    (-(0.5 * (v_old + v_new) - trial_energy) * tau).exp()
}

/// Number of copies of a walker: `floor(w + u)` with the weight clamped to
/// `[0, MAX_BRANCH_WEIGHT]`.
pub fn branching_factor(v_old: f64, v_new: f64, trial_energy: f64, tau: f64, u: f64) -> usize {
    let w = branch_weight(v_old, v_new, trial_energy, tau).clamp(0.0, MAX_BRANCH_WEIGHT);
    (w + u).floor() as usize
}

/// Per-rank observation of one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DmcObservation {
    pub population: u64,
    /// Mean potential over the local walkers; 0 for an empty rank.
    pub mean_potential: f64,
    pub trial_energy: f64,
    /// Walkers whose weight hit the clamp this step.
    pub clamped: u64,
}

impl Codec for DmcObservation {
    fn encode(&self, buf: &mut Vec<u8>) {
        self.population.encode(buf);
        self.mean_potential.encode(buf);
        self.trial_energy.encode(buf);
        self.clamped.encode(buf);
    }

    fn decode(input: &mut &[u8]) -> Result<Self, CodecError> {
        Ok(DmcObservation {
            population: u64::decode(input)?,
            mean_potential: f64::decode(input)?,
            trial_energy: f64::decode(input)?,
            clamped: u64::decode(input)?,
        })
    }
}

/// A rank's walkers.
#[derive(Debug, Clone)]
pub struct WalkerEnsemble {
    dim: usize,
    /// Row-major, `len × dim`.
    positions: Vec<f64>,
    markers: Vec<usize>,
    pub stepsize: f64,
    pub diffusion: f64,
    pub trial_energy: f64,
    pub target_size: usize,
    pub threshold_factor: f64,
    rng: ChaCha8Rng,
    clamped: u64,
    step: usize,
}

impl WalkerEnsemble {
    pub fn new(positions: Vec<f64>, cfg: &DmcConfig, trial_energy: f64, rng: ChaCha8Rng) -> Result<Self> {
        cfg.validate()?;
        if !positions.len().is_multiple_of(cfg.nspacedim) {
            return Err(Error::InvalidArgument("positions do not split into whole walkers".into()));
        }
        Ok(WalkerEnsemble {
            dim: cfg.nspacedim,
            markers: vec![1; positions.len() / cfg.nspacedim],
            positions,
            stepsize: cfg.stepsize,
            diffusion: cfg.diffusion,
            trial_energy,
            target_size: cfg.nwalkers,
            threshold_factor: cfg.threshold_factor,
            rng,
            clamped: 0,
            step: 0,
        })
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn mean_potential(&self) -> f64 {
        if self.markers.is_empty() {
            return 0.0;
        }
        harmonic_potential(&self.positions, self.dim).iter().sum::<f64>() / self.markers.len() as f64
    }
}

impl Population for WalkerEnsemble {
    type Observation = DmcObservation;

    fn move_walkers(&mut self) -> Result<()> {
        self.step += 1;
        self.clamped = 0;
        let spread = (2.0 * self.diffusion * self.stepsize).sqrt();
        let dim = self.dim;
        for (w, marker) in self.markers.iter_mut().enumerate() {
            let walker = &mut self.positions[w * dim..(w + 1) * dim];
            let v_old: f64 = walker.iter().map(|x| x * x).sum();
            for x in walker.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut self.rng);
                *x += spread * z;
            }
            let v_new: f64 = walker.iter().map(|x| x * x).sum();
            if branch_weight(v_old, v_new, self.trial_energy, self.stepsize) > MAX_BRANCH_WEIGHT {
                self.clamped += 1;
            }
            let u: f64 = self.rng.random();
            *marker = branching_factor(v_old, v_new, self.trial_energy, self.stepsize, u);
        }
        Ok(())
    }

    fn marker(&self, i: usize) -> usize {
        self.markers[i]
    }

    fn append(&mut self, i: usize, nchilds: usize) {
        let dim = self.dim;
        let row: Vec<f64> = self.positions[i * dim..(i + 1) * dim].to_vec();
        let at = (i + 1) * dim;
        self.positions
            .splice(at..at, std::iter::repeat_n(row, nchilds).flatten());
        let m = self.markers[i];
        self.markers.splice(i + 1..i + 1, std::iter::repeat_n(m, nchilds));
    }

    fn delete(&mut self, i: usize) {
        self.positions.drain(i * self.dim..(i + 1) * self.dim);
        self.markers.remove(i);
    }

    /// Same result as deleting and appending walker by walker, in one pass.
    fn replicate(&mut self, markers: &[usize]) {
        let dim = self.dim;
        let total: usize = markers.iter().sum();
        let mut positions = Vec::with_capacity(total * dim);
        let mut kept = Vec::with_capacity(total);
        for (w, &m) in markers.iter().enumerate() {
            for _ in 0..m {
                positions.extend_from_slice(&self.positions[w * dim..(w + 1) * dim]);
                kept.push(self.markers[w]);
            }
        }
        self.positions = positions;
        self.markers = kept;
    }

    fn sample_observables(&self) -> DmcObservation {
        DmcObservation {
            population: self.markers.len() as u64,
            mean_potential: self.mean_potential(),
            trial_energy: self.trial_energy,
            clamped: self.clamped,
        }
    }

    fn finalize_timestep(&mut self, _old_global_size: usize, new_global_size: usize) -> Result<()> {
        if new_global_size == 0 {
            return Err(Error::Extinction { step: self.step });
        }
        self.trial_energy +=
            FEEDBACK_GAIN / self.stepsize * (self.target_size as f64 / new_global_size as f64).ln();
        Ok(())
    }

    fn len(&self) -> usize {
        self.markers.len()
    }

    fn cut_slice(&mut self, k: usize) -> Result<MigrationSlice> {
        let n = self.markers.len();
        if k > n {
            return Err(Error::InvalidArgument(format!("cut at {k} beyond {n} walkers")));
        }
        let positions = self.positions.split_off(k * self.dim);
        let markers = self.markers.split_off(k);
        Ok(MigrationSlice {
            count: n - k,
            walkers: Payload::encode(&(positions, markers)),
        })
    }

    fn paste_slice(&mut self, slice: MigrationSlice) -> Result<()> {
        let (positions, markers): (Vec<f64>, Vec<usize>) = slice.walkers.decode()?;
        if markers.len() != slice.count || positions.len() != slice.count * self.dim {
            return Err(Error::InvalidArgument("migration slice does not match its count".into()));
        }
        self.positions.extend(positions);
        self.markers.extend(markers);
        Ok(())
    }

    fn threshold_factor(&self) -> f64 {
        self.threshold_factor
    }
}

/// Seed of the stream that draws every initial position.
fn initial_stream(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

/// Builds rank `my_rank`'s share of the initial ensemble.
///
/// All positions come from one seeded stream and are split by
/// [`simple_partitioning`], so the global initial state does not depend on
/// the number of ranks. The trial energy starts at the global initial mean
/// potential; moves use the per-rank stream `seed + rank`.
pub fn dmc_initialize(my_rank: Rank, num_procs: usize, cfg: &DmcConfig) -> Result<(WalkerEnsemble, usize)> {
    cfg.validate()?;
    let dim = cfg.nspacedim;
    let mut init = initial_stream(cfg.seed);
    let all: Vec<f64> = (0..cfg.nwalkers * dim).map(|_| StandardNormal.sample(&mut init)).collect();
    let counts = simple_partitioning(cfg.nwalkers, num_procs)?;
    let offset = subproblem_offset(cfg.nwalkers, my_rank, num_procs)?;
    let mine = all[offset * dim..(offset + counts[my_rank]) * dim].to_vec();
    let trial_energy = harmonic_potential(&all, dim).iter().sum::<f64>() / cfg.nwalkers as f64;
    let rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(my_rank as u64));
    Ok((WalkerEnsemble::new(mine, cfg, trial_energy, rng)?, cfg.timesteps))
}

/// Group-wide observation of one step.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct GlobalObservation {
    pub step: usize,
    pub population: u64,
    pub mean_potential: f64,
    pub trial_energy: f64,
    pub clamped: u64,
}

/// Combines per-rank traces step by step, weighting by local population.
pub fn merge_traces(traces: &[Vec<DmcObservation>]) -> Result<Vec<GlobalObservation>> {
    let Some(first) = traces.first() else {
        return Ok(Vec::new());
    };
    if traces.iter().any(|t| t.len() != first.len()) {
        return Err(Error::App("per-rank traces differ in length".into()));
    }
    Ok((0..first.len())
        .map(|step| {
            let population: u64 = traces.iter().map(|t| t[step].population).sum();
            let weighted: f64 = traces
                .iter()
                .map(|t| t[step].population as f64 * t[step].mean_potential)
                .sum();
            GlobalObservation {
                step,
                population,
                mean_potential: if population > 0 { weighted / population as f64 } else { 0.0 },
                trial_energy: first[step].trial_energy,
                clamped: traces.iter().map(|t| t[step].clamped).sum(),
            }
        })
        .collect())
}

/// Energy estimate with its blocking standard error.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct EnergyEstimate {
    pub energy: f64,
    pub standard_error: f64,
}

fn weighted_mean(steps: &[GlobalObservation]) -> f64 {
    let w: f64 = steps.iter().map(|o| o.population as f64).sum();
    steps.iter().map(|o| o.population as f64 * o.mean_potential).sum::<f64>() / w
}

/// Population-weighted mean of `⟨V⟩` after `burn_in` steps; standard error
/// from 20 contiguous blocks.
pub fn dmc_energy_estimate(trace: &[GlobalObservation], burn_in: usize) -> Result<EnergyEstimate> {
    let kept = trace.get(burn_in..).unwrap_or(&[]);
    if kept.len() < ESTIMATE_BLOCKS {
        return Err(Error::InvalidArgument(format!(
            "{} steps after burn-in, need at least {ESTIMATE_BLOCKS}",
            kept.len()
        )));
    }
    let energy = weighted_mean(kept);
    let block = kept.len() / ESTIMATE_BLOCKS;
    let means: Vec<f64> = kept
        .chunks(block)
        .take(ESTIMATE_BLOCKS)
        .map(weighted_mean)
        .collect();
    let k = means.len() as f64;
    let m = means.iter().sum::<f64>() / k;
    let var = means.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (k - 1.0);
    Ok(EnergyEstimate {
        energy,
        standard_error: (var / k).sqrt(),
    })
}

/// Full result of a run.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct DmcResult {
    pub trace: Vec<GlobalObservation>,
    pub estimate: EnergyEstimate,
    pub burn_in: usize,
    pub clamp_events: u64,
}

fn summarize(traces: Vec<Vec<DmcObservation>>, burn_in: usize) -> Result<DmcResult> {
    let trace = merge_traces(&traces)?;
    let estimate = dmc_energy_estimate(&trace, burn_in)?;
    Ok(DmcResult {
        clamp_events: trace.iter().map(|o| o.clamped).sum(),
        trace,
        estimate,
        burn_in,
    })
}

pub fn run_dmc_serial(cfg: &DmcConfig, burn_in: usize) -> Result<DmcResult> {
    time_integration(|| dmc_initialize(0, 1, cfg), |trace| summarize(vec![trace], burn_in))
}

/// Collective run; rank 0's `result` holds the merged trace and estimate.
pub fn run_dmc(cfg: &DmcConfig, burn_in: usize, comm: &Comm, timing: TimingSource) -> Result<ParallelRun<DmcResult>> {
    parallel_time_integration(
        |rank, size| dmc_initialize(rank, size, cfg),
        |traces| summarize(traces, burn_in),
        comm,
        timing,
    )
}

/// Writes the trace as CSV: `step,population,meanV,E_T`.
pub fn write_trace_csv<W: Write>(out: W, trace: &[GlobalObservation]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::App(format!("writing CSV: {e}"));
    w.write_record(["step", "population", "meanV", "E_T"]).map_err(err)?;
    for o in trace {
        w.write_record([
            o.step.to_string(),
            o.population.to_string(),
            format_g17(o.mean_potential),
            format_g17(o.trial_energy),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| Error::App(format!("writing CSV: {e}")))?;
    Ok(())
}
