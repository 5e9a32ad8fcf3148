//! Time-stepped population driver with dynamic load balancing.
//!
//! A population is a set of walkers that each step are moved, then deleted
//! or cloned according to an integer marker. In parallel every rank owns a
//! local population; when the spread of local sizes exceeds the population's
//! threshold factor, walkers migrate from overloaded to underloaded ranks.

use std::time::Instant;

use crate::codec::{Codec, Payload};
use crate::comm::{Comm, Rank};
use crate::error::{CodecError, Error, Result};

/// A block of serialized walkers in transit between ranks.
#[derive(Debug, Clone, PartialEq)]
pub struct MigrationSlice {
    pub count: usize,
    pub walkers: Payload,
}

impl MigrationSlice {
    pub fn empty() -> Self {
        MigrationSlice {
            count: 0,
            walkers: Payload::empty(),
        }
    }
}

impl Codec for MigrationSlice {
    fn encode(&self, buf: &mut Vec<u8>) {
        self.count.encode(buf);
        self.walkers.encode(buf);
    }

    fn decode(input: &mut &[u8]) -> Result<Self, CodecError> {
        Ok(MigrationSlice {
            count: usize::decode(input)?,
            walkers: <Payload as Codec>::decode(input)?,
        })
    }
}

/// Operations the drivers need from an application's population.
pub trait Population {
    type Observation: Codec + Clone;

    /// Advances every walker one step and computes its marker.
    fn move_walkers(&mut self) -> Result<()>;
    /// Number of copies of walker `i` that survive the step.
    fn marker(&self, i: usize) -> usize;
    /// Inserts `nchilds` clones of walker `i` directly after it.
    fn append(&mut self, i: usize, nchilds: usize);
    fn delete(&mut self, i: usize);
    fn sample_observables(&self) -> Self::Observation;
    fn finalize_timestep(&mut self, old_global_size: usize, new_global_size: usize) -> Result<()>;
    fn len(&self) -> usize;
    /// Removes walkers `k..len()` and returns them serialized.
    fn cut_slice(&mut self, k: usize) -> Result<MigrationSlice>;
    fn paste_slice(&mut self, slice: MigrationSlice) -> Result<()>;
    fn threshold_factor(&self) -> f64;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Applies one marker per walker. Survivors keep their order and clones
    /// sit right after their parent. Walking backwards keeps the indices of
    /// unvisited walkers valid.
    fn replicate(&mut self, markers: &[usize]) {
        for (i, &m) in markers.iter().enumerate().rev() {
            match m {
                0 => self.delete(i),
                1 => {}
                n => self.append(i, n - 1),
            }
        }
    }
}

/// Moves and branches the local population without checking for extinction.
pub fn branch_population<P: Population>(pop: &mut P) -> Result<P::Observation> {
    pop.move_walkers()?;
    let markers: Vec<usize> = (0..pop.len()).map(|i| pop.marker(i)).collect();
    pop.replicate(&markers);
    Ok(pop.sample_observables())
}

/// One serial step: move, branch, sample. Fails if no walker survives.
pub fn do_timestep<P: Population>(pop: &mut P, step: usize) -> Result<P::Observation> {
    if pop.is_empty() {
        return Err(Error::Extinction { step });
    }
    let obs = branch_population(pop)?;
    if pop.is_empty() {
        return Err(Error::Extinction { step });
    }
    Ok(obs)
}

/// Serial driver. `initialize` returns the population and number of steps;
/// `finalize` receives the full observation trace.
pub fn time_integration<P, I, F, S>(initialize: I, finalize: F) -> Result<S>
where
    P: Population,
    I: FnOnce() -> Result<(P, usize)>,
    F: FnOnce(Vec<P::Observation>) -> Result<S>,
{
    let (mut pop, timesteps) = initialize()?;
    let mut trace = Vec::with_capacity(timesteps);
    for step in 0..timesteps {
        let old = pop.len();
        trace.push(do_timestep(&mut pop, step)?);
        let new = pop.len();
        pop.finalize_timestep(old, new)?;
    }
    finalize(trace)
}

/// `max / max(1, min)` of the per-rank counts; an all-zero workload counts
/// as balanced.
pub fn imbalance_rate(counts: &[usize]) -> Result<f64> {
    let (Some(&max), Some(&min)) = (counts.iter().max(), counts.iter().min()) else {
        return Err(Error::InvalidArgument("imbalance_rate of an empty workload".into()));
    };
    Ok((max as f64 / min.max(1) as f64).max(1.0))
}

/// Target counts proportional to each rank's speed `1 / t_i`, rounded by
/// floor plus largest remainder. Ties go to the lowest rank.
pub fn find_optimal_workload(timings: &[f64], current: &[usize]) -> Result<Vec<usize>> {
    if timings.len() != current.len() || timings.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "{} timings for {} ranks",
            timings.len(),
            current.len()
        )));
    }
    for (rank, &t) in timings.iter().enumerate() {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::InvalidTiming { rank, value: t });
        }
    }
    let total: usize = current.iter().sum();
    let inverse_sum: f64 = timings.iter().map(|t| 1.0 / t).sum();
    let c = total as f64 / inverse_sum;
    let raw: Vec<f64> = timings.iter().map(|t| c / t).collect();
    let mut target: Vec<usize> = raw.iter().map(|r| (r.floor() as usize).min(total)).collect();
    let assigned: usize = target.iter().sum();
    if assigned > total {
        // only reachable through rounding noise in `c / t`
        let mut excess = assigned - total;
        for t in target.iter_mut().rev() {
            let take = excess.min(*t);
            *t -= take;
            excess -= take;
        }
        return Ok(target);
    }
    let mut order: Vec<usize> = (0..raw.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = raw[a] - raw[a].floor();
        let rb = raw[b] - raw[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &rank in order.iter().cycle().take(total - assigned) {
        target[rank] += 1;
    }
    Ok(target)
}

/// Moves walkers until every rank holds `target[rank]`. Each round the rank
/// with the largest surplus ships its whole surplus to the rank with the
/// largest deficit. Returns the number of transfers.
pub fn redistribute_work<P: Population>(
    pop: &mut P,
    current: &[usize],
    target: &[usize],
    comm: &Comm,
) -> Result<usize> {
    let size = comm.size();
    if current.len() != size || target.len() != size {
        return Err(Error::InvalidArgument("workload vectors must have one entry per rank".into()));
    }
    if current.iter().sum::<usize>() != target.iter().sum::<usize>() {
        return Err(Error::InvalidArgument("current and target totals differ".into()));
    }
    let me = comm.rank();
    let mut diff: Vec<i64> = current.iter().zip(target).map(|(&c, &t)| c as i64 - t as i64).collect();
    let mut transfers = 0;
    while diff.iter().any(|&d| d != 0) {
        if transfers >= size {
            return Err(Error::RedistributionOverrun { limit: size });
        }
        let rank_max = argmax(&diff);
        let rank_min = argmin(&diff);
        if me == rank_max {
            let slice = pop.cut_slice(target[rank_max])?;
            comm.send_value(rank_min, &slice)?;
        } else if me == rank_min {
            let slice: MigrationSlice = comm.recv_value(rank_max)?;
            pop.paste_slice(slice)?;
        }
        diff[rank_min] += diff[rank_max];
        diff[rank_max] = 0;
        transfers += 1;
    }
    Ok(transfers)
}

fn argmax(v: &[i64]) -> Rank {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn argmin(v: &[i64]) -> Rank {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x < v[best] {
            best = i;
        }
    }
    best
}

/// What one call to [`dynamic_load_balancing`] saw and did.
#[derive(Debug, Clone, PartialEq)]
pub struct Rebalance {
    /// Per-rank counts gathered before any migration.
    pub counts: Vec<usize>,
    /// Target counts, if the imbalance triggered a redistribution.
    pub target: Option<Vec<usize>>,
    pub transfers: usize,
}

/// Collective: rebalances when `imbalance_rate` exceeds the population's
/// threshold factor.
pub fn dynamic_load_balancing<P: Population>(pop: &mut P, task_time: f64, comm: &Comm) -> Result<Rebalance> {
    let counts = comm.all_gather_value(&pop.len())?;
    if imbalance_rate(&counts)? <= pop.threshold_factor() {
        return Ok(Rebalance {
            counts,
            target: None,
            transfers: 0,
        });
    }
    let timings = comm.all_gather_value(&task_time)?;
    let target = find_optimal_workload(&timings, &counts)?;
    let transfers = redistribute_work(pop, &counts, &target, comm)?;
    Ok(Rebalance {
        counts,
        target: Some(target),
        transfers,
    })
}

/// Where the per-step task time fed to load balancing comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimingSource {
    /// Measured wall time of the local step.
    #[serde(rename = "wall")]
    WallClock,
    /// Every rank reports 1.0, so targets depend only on counts and runs are
    /// reproducible.
    #[default]
    Uniform,
}

impl std::fmt::Display for TimingSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TimingSource::WallClock => "wall",
            TimingSource::Uniform => "uniform",
        })
    }
}

impl std::str::FromStr for TimingSource {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "wall" => Ok(TimingSource::WallClock),
            "uniform" => Ok(TimingSource::Uniform),
            other => Err(format!("unknown timing source `{other}` (expected wall|uniform)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepStats {
    pub counts: Vec<usize>,
    pub rebalanced: bool,
    pub transfers: usize,
    pub task_time: f64,
}

#[derive(Debug)]
pub struct ParallelRun<S> {
    /// `finalize`'s result; present on rank 0 only.
    pub result: Option<S>,
    pub steps: Vec<StepStats>,
}

/// Parallel driver. `initialize(rank, size)` builds the local population and
/// step count; rank 0 runs `finalize` on the per-rank traces in rank order.
pub fn parallel_time_integration<P, I, F, S>(
    initialize: I,
    finalize: F,
    comm: &Comm,
    timing: TimingSource,
) -> Result<ParallelRun<S>>
where
    P: Population,
    I: FnOnce(Rank, usize) -> Result<(P, usize)>,
    F: FnOnce(Vec<Vec<P::Observation>>) -> Result<S>,
{
    let (mut pop, timesteps) = initialize(comm.rank(), comm.size())?;
    let all_steps = comm.all_gather_value(&timesteps)?;
    if all_steps.iter().any(|&t| t != timesteps) {
        return Err(Error::InvalidArgument(format!("ranks disagree on timesteps: {all_steps:?}")));
    }
    let mut old_global: usize = comm.all_gather_value(&pop.len())?.iter().sum();
    let mut trace = Vec::with_capacity(timesteps);
    let mut steps = Vec::with_capacity(timesteps);
    for step in 0..timesteps {
        if old_global == 0 {
            return Err(Error::Extinction { step });
        }
        let started = Instant::now();
        let obs = branch_population(&mut pop)?;
        let task_time = match timing {
            TimingSource::WallClock => started.elapsed().as_secs_f64().max(1e-9),
            TimingSource::Uniform => 1.0,
        };
        let reb = dynamic_load_balancing(&mut pop, task_time, comm)?;
        let new_global: usize = reb.counts.iter().sum();
        if new_global == 0 {
            return Err(Error::Extinction { step });
        }
        pop.finalize_timestep(old_global, new_global)?;
        old_global = new_global;
        trace.push(obs);
        steps.push(StepStats {
            rebalanced: reb.target.is_some(),
            counts: reb.counts,
            transfers: reb.transfers,
            task_time,
        });
    }
    let traces = crate::partition::collect_subproblem_output_args(vec![trace], comm)?;
    let result = match traces {
        Some(traces) => Some(finalize(traces)?),
        None => None,
    };
    Ok(ParallelRun { result, steps })
}

/// Walkers that are bare `u64` tags with markers from a fixed rule.
/// Useful for exercising the drivers without any physics.
#[derive(Debug, Clone)]
pub struct TaggedPopulation {
    pub tags: Vec<u64>,
    markers: Vec<usize>,
    rule: fn(u64, usize) -> usize,
    step: usize,
    threshold_factor: f64,
}

impl TaggedPopulation {
    /// `rule(tag, step)` gives the marker of a walker at a step (1-based).
    pub fn new(tags: Vec<u64>, rule: fn(u64, usize) -> usize, threshold_factor: f64) -> Self {
        TaggedPopulation {
            markers: vec![1; tags.len()],
            tags,
            rule,
            step: 0,
            threshold_factor,
        }
    }

    /// Every walker survives unchanged.
    pub fn neutral(tags: Vec<u64>) -> Self {
        Self::new(tags, |_, _| 1, 1.1)
    }

    /// Walker `i` gets marker `markers[i]` on the next step.
    pub fn set_markers(&mut self, markers: Vec<usize>) {
        assert_eq!(markers.len(), self.tags.len());
        self.markers = markers;
    }
}

impl Population for TaggedPopulation {
    /// (local size, sum of tags)
    type Observation = (u64, u64);

    fn move_walkers(&mut self) -> Result<()> {
        self.step += 1;
        let (rule, step) = (self.rule, self.step);
        self.markers = self.tags.iter().map(|&t| rule(t, step)).collect();
        Ok(())
    }

    fn marker(&self, i: usize) -> usize {
        self.markers[i]
    }

    fn append(&mut self, i: usize, nchilds: usize) {
        let tag = self.tags[i];
        let m = self.markers[i];
        self.tags.splice(i + 1..i + 1, std::iter::repeat_n(tag, nchilds));
        self.markers.splice(i + 1..i + 1, std::iter::repeat_n(m, nchilds));
    }

    fn delete(&mut self, i: usize) {
        self.tags.remove(i);
        self.markers.remove(i);
    }

    fn sample_observables(&self) -> (u64, u64) {
        (self.tags.len() as u64, self.tags.iter().sum())
    }

    fn finalize_timestep(&mut self, _old: usize, _new: usize) -> Result<()> {
        Ok(())
    }

    fn len(&self) -> usize {
        self.tags.len()
    }

    fn cut_slice(&mut self, k: usize) -> Result<MigrationSlice> {
        if k > self.tags.len() {
            return Err(Error::InvalidArgument(format!("cut at {k} beyond {} walkers", self.tags.len())));
        }
        let moved = self.tags.split_off(k);
        self.markers.truncate(k);
        Ok(MigrationSlice {
            count: moved.len(),
            walkers: Payload::encode(&moved),
        })
    }

    fn paste_slice(&mut self, slice: MigrationSlice) -> Result<()> {
        let moved: Vec<u64> = slice.walkers.decode()?;
        if moved.len() != slice.count {
            return Err(Error::InvalidArgument("migration slice count mismatch".into()));
        }
        self.markers.extend(std::iter::repeat_n(1, moved.len()));
        self.tags.extend(moved);
        Ok(())
    }

    fn threshold_factor(&self) -> f64 {
        self.threshold_factor
    }
}
