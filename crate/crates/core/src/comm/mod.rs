//! Rank-addressed message passing.
//!
//! A [`Comm`] is one rank's handle on a group. Point-to-point delivery is
//! FIFO per ordered `(source, dest)` pair with no global ordering; collectives
//! are layered on point-to-point as gather-to-root followed by a broadcast.
//!
//! Two transports exist: [`threads`] (in-process queues with deadlock
//! detection) and [`sockets`] (full mesh over loopback TCP, length-prefixed
//! frames).

use std::cell::Cell;
use std::marker::PhantomData;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::codec::{Codec, Payload};
use crate::error::{CommError, Error, Result};

pub mod sockets;
pub mod threads;

/// Index of a rank within its group. Rank 0 is the master.
pub type Rank = usize;

/// Moves payloads between ranks. One instance per rank.
pub trait Transport: Send {
    fn send(&self, dest: Rank, payload: Payload) -> Result<(), CommError>;
    fn recv(&self, source: Rank) -> Result<Payload, CommError>;
    /// Called when the owning rank fails so blocked peers can bail out.
    fn abort(&self) {}
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    #[default]
    Threads,
    Sockets,
}

impl std::fmt::Display for Backend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Backend::Threads => "threads",
            Backend::Sockets => "sockets",
        })
    }
}

impl std::str::FromStr for Backend {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "threads" => Ok(Backend::Threads),
            "sockets" => Ok(Backend::Sockets),
            other => Err(format!("unknown backend `{other}` (expected threads|sockets)")),
        }
    }
}

/// Configuration of a group of ranks.
#[derive(Debug, Clone)]
pub struct CommGroup {
    pub size: usize,
    pub backend: Backend,
    pub base_seed: u64,
    /// Receive timeout for the sockets backend.
    pub timeout: Duration,
}

impl CommGroup {
    pub fn new(size: usize, backend: Backend, base_seed: u64) -> Self {
        CommGroup {
            size,
            backend,
            base_seed,
            timeout: Duration::from_secs(30),
        }
    }

    pub fn threads(size: usize) -> Self {
        Self::new(size, Backend::Threads, 0)
    }

    pub fn with_seed(mut self, base_seed: u64) -> Self {
        self.base_seed = base_seed;
        self
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }
}

/// One rank's communicator handle.
///
/// Owned by a single thread at a time: it can be moved before use but is not
/// `Sync`.
pub struct Comm {
    rank: Rank,
    size: usize,
    base_seed: u64,
    transport: Box<dyn Transport>,
    _not_sync: PhantomData<Cell<()>>,
}

impl std::fmt::Debug for Comm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Comm")
            .field("rank", &self.rank)
            .field("size", &self.size)
            .finish_non_exhaustive()
    }
}

impl Comm {
    pub fn new(rank: Rank, size: usize, base_seed: u64, transport: Box<dyn Transport>) -> Self {
        Comm {
            rank,
            size,
            base_seed,
            transport,
            _not_sync: PhantomData,
        }
    }

    /// A group of one, for running the parallel drivers serially.
    pub fn solo(base_seed: u64) -> Self {
        let transport = threads::ThreadTransport::group(1).pop().expect("one transport");
        Comm::new(0, 1, base_seed, Box::new(transport))
    }

    pub fn rank(&self) -> Rank {
        self.rank
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn is_root(&self) -> bool {
        self.rank == 0
    }

    pub fn base_seed(&self) -> u64 {
        self.base_seed
    }

    /// Per-rank seed: `base_seed + rank`.
    pub fn seed(&self) -> u64 {
        self.base_seed.wrapping_add(self.rank as u64)
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed())
    }

    fn check_peer(&self, peer: Rank) -> Result<(), CommError> {
        if peer == self.rank || peer >= self.size {
            return Err(CommError::InvalidRank {
                rank: self.rank,
                peer,
                size: self.size,
            });
        }
        Ok(())
    }

    pub fn send(&self, dest: Rank, payload: Payload) -> Result<(), CommError> {
        self.check_peer(dest)?;
        self.transport.send(dest, payload)
    }

    /// Blocks until the next message from `source` arrives.
    pub fn recv(&self, source: Rank) -> Result<Payload, CommError> {
        self.check_peer(source)?;
        self.transport.recv(source)
    }

    pub fn send_value<T: Codec>(&self, dest: Rank, value: &T) -> Result<()> {
        Ok(self.send(dest, Payload::encode(value))?)
    }

    pub fn recv_value<T: Codec>(&self, source: Rank) -> Result<T> {
        Ok(self.recv(source)?.decode()?)
    }

    /// Returns `root`'s payload on every rank. Non-root inputs are ignored.
    pub fn broadcast(&self, payload: Payload, root: Rank) -> Result<Payload> {
        if root >= self.size {
            return Err(CommError::InvalidRank {
                rank: self.rank,
                peer: root,
                size: self.size,
            }
            .into());
        }
        if self.rank == root {
            for dest in (0..self.size).filter(|&r| r != root) {
                self.send(dest, payload.clone())?;
            }
            Ok(payload)
        } else {
            Ok(self.recv(root)?)
        }
    }

    /// Every rank receives the same rank-ordered sequence of contributions.
    pub fn all_gather(&self, payload: Payload) -> Result<Vec<Payload>> {
        if self.size == 1 {
            return Ok(vec![payload]);
        }
        let packed = if self.rank == 0 {
            let mut all = Vec::with_capacity(self.size);
            all.push(payload);
            for source in 1..self.size {
                all.push(self.recv(source)?);
            }
            Payload::encode(&all)
        } else {
            self.send(0, payload)?;
            Payload::empty()
        };
        let packed = self.broadcast(packed, 0)?;
        Ok(packed.decode()?)
    }

    pub fn all_gather_value<T: Codec>(&self, value: &T) -> Result<Vec<T>> {
        self.all_gather(Payload::encode(value))?
            .iter()
            .map(|p| p.decode().map_err(Error::from))
            .collect()
    }

    /// Maximum over ranks; NaN on any rank propagates.
    pub fn all_reduce_max(&self, x: f64) -> Result<f64> {
        let all = self.all_gather_value(&x)?;
        Ok(all.into_iter().fold(f64::NEG_INFINITY, |acc, v| {
            if v.is_nan() || acc.is_nan() {
                f64::NAN
            } else if v > acc {
                v
            } else {
                acc
            }
        }))
    }

    pub fn all_reduce_sum(&self, x: f64) -> Result<f64> {
        Ok(self.all_gather_value(&x)?.into_iter().sum())
    }

    pub fn barrier(&self) -> Result<()> {
        self.all_gather(Payload::empty()).map(|_| ())
    }

    /// Tells peers this rank has failed so they stop waiting on it.
    pub fn abort(&self) {
        self.transport.abort();
    }
}

fn panic_message(panic: Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = panic.downcast_ref::<&str>() {
        (*s).to_string()
    } else if let Some(s) = panic.downcast_ref::<String>() {
        s.clone()
    } else {
        "non-string panic payload".to_string()
    }
}


/// Runs `entry` once per rank, each on its own thread with a live
/// communicator, and returns the per-rank results ordered by rank.
///
/// If any rank fails (error or panic) the group is aborted and the returned
/// error names the rank that failed first.
pub fn spawn_group<T, F>(group: &CommGroup, entry: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&Comm) -> Result<T> + Sync,
{
    if group.size == 0 {
        return Err(Error::InvalidArgument("group size must be at least 1".into()));
    }
    let size = group.size;
    let entry = &entry;
    let run_rank = move |comm: Result<Comm>| -> Result<T> {
        let comm = comm?;
        let outcome = catch_unwind(AssertUnwindSafe(|| entry(&comm)));
        let result = match outcome {
            Ok(r) => r,
            Err(panic) => Err(Error::Panic(panic_message(panic))),
        };
        if result.is_err() {
            comm.abort();
        }
        result
    };

    let results: Vec<Result<T>> = match group.backend {
        Backend::Threads => {
            let transports = threads::ThreadTransport::group(size);
            std::thread::scope(|scope| {
                let handles: Vec<_> = transports
                    .into_iter()
                    .enumerate()
                    .map(|(rank, t)| {
                        let comm = Comm::new(rank, size, group.base_seed, Box::new(t));
                        std::thread::Builder::new()
                            .name(format!("rank-{rank}"))
                            .spawn_scoped(scope, move || run_rank(Ok(comm)))
                            .expect("spawn rank thread")
                    })
                    .collect();
                handles.into_iter().map(join_rank).collect()
            })
        }
        Backend::Sockets => {
            let (boot, listeners) = sockets::Bootstrap::bind_loopback(size, group)?;
            let boot = &boot;
            std::thread::scope(|scope| {
                let handles: Vec<_> = listeners
                    .into_iter()
                    .enumerate()
                    .map(|(rank, listener)| {
                        std::thread::Builder::new()
                            .name(format!("rank-{rank}"))
                            .spawn_scoped(scope, move || {
                                let comm = sockets::SocketTransport::connect(boot, rank, Some(listener))
                                    .map(|t| Comm::new(rank, size, boot.base_seed, Box::new(t)))
                                    .map_err(Error::from);
                                run_rank(comm)
                            })
                            .expect("spawn rank thread")
                    })
                    .collect();
                handles.into_iter().map(join_rank).collect()
            })
        }
    };

    let failures: Vec<(usize, &Error)> = results
        .iter()
        .enumerate()
        .filter_map(|(r, res)| res.as_ref().err().map(|e| (r, e)))
        .collect();
    if !failures.is_empty() {
        let primary = failures
            .iter()
            .find(|(_, e)| !e.is_consequential())
            .unwrap_or(&failures[0])
            .0;
        let err = results
            .into_iter()
            .nth(primary)
            .and_then(Result::err)
            .expect("primary failure present");
        return Err(Error::RankFailed {
            rank: primary,
            source: Box::new(err),
        });
    }
    Ok(results.into_iter().filter_map(Result::ok).collect())
}

fn join_rank<T>(handle: std::thread::ScopedJoinHandle<'_, Result<T>>) -> Result<T> {
    handle
        .join()
        .unwrap_or_else(|p| Err(Error::Panic(panic_message(p))))
}
