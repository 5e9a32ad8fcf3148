//! Additive Schwarz iteration over overlapping subdomains.
//!
//! Each rank owns one subdomain. Every iteration it snapshots its iterate,
//! refreshes the internal boundary data, solves its subdomain problem,
//! exchanges overlap values with its neighbours and joins a collective
//! convergence test.

use crate::comm::Comm;
use crate::error::{Error, Result};

/// A local field: copyable, subtractable, with an inner product.
pub trait Field: Clone {
    fn sub(&self, other: &Self) -> Self;
    fn dot(&self, other: &Self) -> f64;
    fn all_finite(&self) -> bool;
}

impl Field for Vec<f64> {
    fn sub(&self, other: &Self) -> Self {
        self.iter().zip(other).map(|(a, b)| a - b).collect()
    }

    fn dot(&self, other: &Self) -> f64 {
        self.iter().zip(other).map(|(a, b)| a * b).sum()
    }

    fn all_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }
}

/// One rank's share of a decomposed problem.
pub trait SubdomainProblem {
    type Field: Field;

    /// Updates the artificial boundary data from the current iterate.
    fn set_bc(&mut self, solution: &mut Self::Field) -> Result<()>;
    fn subdomain_solve(&mut self, solution: &Self::Field) -> Result<Self::Field>;
    /// Refreshes the overlap values from the neighbours' latest solutions.
    fn communicate(&mut self, solution: &mut Self::Field, comm: &Comm) -> Result<()>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceParams {
    pub max_iter: usize,
    pub threshold: f64,
}

impl ConvergenceParams {
    pub fn new(max_iter: usize, threshold: f64) -> Result<Self> {
        if threshold.is_nan() || threshold <= 0.0 {
            return Err(Error::InvalidArgument(format!("threshold must be positive, got {threshold}")));
        }
        Ok(ConvergenceParams { max_iter, threshold })
    }
}

#[derive(Debug, Clone)]
pub struct SchwarzOutcome<F> {
    pub solution: F,
    pub iterations: usize,
    pub converged: bool,
}

/// Runs the Schwarz loop until `convergence_test` succeeds or the budget is
/// spent. The test is called as `test(solution, previous, threshold, comm)`
/// and must return the same answer on every rank.
pub fn additive_schwarz_iterations<P, T>(
    problem: &mut P,
    params: ConvergenceParams,
    mut solution: P::Field,
    comm: &Comm,
    mut convergence_test: T,
) -> Result<SchwarzOutcome<P::Field>>
where
    P: SubdomainProblem,
    T: FnMut(&P::Field, &P::Field, f64, &Comm) -> Result<bool>,
{
    let mut iterations = 0;
    let mut converged = false;
    while !converged && iterations < params.max_iter {
        iterations += 1;
        let previous = solution.clone();
        problem.set_bc(&mut solution)?;
        solution = problem.subdomain_solve(&solution)?;
        problem.communicate(&mut solution, comm)?;
        if !solution.all_finite() {
            return Err(Error::Divergence { iteration: iterations });
        }
        converged = convergence_test(&solution, &previous, params.threshold, comm)?;
    }
    Ok(SchwarzOutcome {
        solution,
        iterations,
        converged,
    })
}

/// Squared relative change `⟨d,d⟩ / ⟨u,u⟩` with `d = solution − previous`.
/// A zero change counts as 0 even when the field is zero; a nonzero change
/// of a zero field is infinite.
pub fn relative_change<F: Field>(solution: &F, previous: &F) -> f64 {
    let d = solution.sub(previous);
    let dd = d.dot(&d);
    let uu = solution.dot(solution);
    if uu == 0.0 {
        if dd == 0.0 {
            log::debug!("relative change of a zero field with zero update taken as 0");
            0.0
        } else {
            log::debug!("relative change of a zero field with nonzero update taken as infinite");
            f64::INFINITY
        }
    } else {
        dd / uu
    }
}

/// Converged when the largest relative change over all ranks is below
/// `threshold`.
pub fn simple_convergence_test<F: Field>(solution: &F, previous: &F, threshold: f64, comm: &Comm) -> Result<bool> {
    let global = comm.all_reduce_max(relative_change(solution, previous))?;
    Ok(global < threshold)
}
