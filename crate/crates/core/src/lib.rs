//! Function-centric parallel patterns on top of a small message-passing layer.
//!
//! The crate provides three reusable drivers, each written against a
//! rank-addressed [`Comm`] handle:
//!
//! - [`taskmap`]: static task farming (`initialize → map(task) → finalize`),
//!   with the partitioning helpers in [`partition`].
//! - [`population`]: time-stepped population Monte Carlo with dynamic load
//!   balancing and walker migration.
//! - [`schwarz`]: additive Schwarz iteration with pluggable subdomain solve,
//!   internal boundary update and halo communication.
//!
//! Groups of ranks are launched in-process with [`spawn_group`], either on the
//! deterministic threaded backend or over loopback TCP sockets.

pub mod codec;
pub mod comm;
mod error;
pub mod partition;
pub mod population;
pub mod schwarz;
pub mod taskmap;

pub use codec::{Codec, Payload};
pub use comm::{spawn_group, Backend, Comm, CommGroup, Rank};
pub use error::{CodecError, CommError, Error, Result};
