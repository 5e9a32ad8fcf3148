//! Demo applications built on the `parapat-core` drivers.
//!
//! - [`parabola`]: a task-farmed parameter sweep.
//! - [`idealpoint`]: a probit ideal-point Gibbs sampler run as independent
//!   chains.
//! - [`dmc`]: diffusion Monte Carlo in a 3D harmonic trap, parallelized by the
//!   load-balanced population driver.
//! - [`poisson`]: a 2D Poisson problem solved by overlapping strips under the
//!   additive Schwarz driver.

pub mod dmc;
pub mod idealpoint;
pub mod numfmt;
pub mod parabola;
pub mod poisson;
