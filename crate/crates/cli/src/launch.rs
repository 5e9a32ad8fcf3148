//! Starting a group of ranks for a [`RunSpec`].

use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::time::{Duration, Instant};

use parapat_core::comm::sockets::{Bootstrap, SocketTransport};
use parapat_core::{spawn_group, Backend, Comm, CommGroup, Error, Result};

use crate::app::{execute, AppOutput, RunSpec};

#[derive(Debug, Clone)]
pub struct Launch {
    pub procs: usize,
    pub backend: Backend,
    /// For the sockets backend: run ranks 1.. as separate processes of this
    /// executable. Without it all ranks are threads of this process.
    pub worker_exe: Option<PathBuf>,
    pub timeout: Duration,
}

impl Launch {
    pub fn new(procs: usize, backend: Backend) -> Self {
        Launch {
            procs,
            backend,
            worker_exe: None,
            timeout: Duration::from_secs(600),
        }
    }
}

/// Runs the group and returns rank 0's output.
pub fn launch(spec: &RunSpec, how: &Launch) -> Result<AppOutput> {
    if how.procs == 0 {
        return Err(Error::InvalidArgument("--procs must be at least 1".into()));
    }
    match (&how.backend, &how.worker_exe) {
        (Backend::Sockets, Some(exe)) if how.procs > 1 => launch_processes(spec, how, exe),
        _ => {
            let group = CommGroup::new(how.procs, how.backend, spec.seed).with_timeout(how.timeout);
            let mut outputs = spawn_group(&group, |comm| execute(spec, comm))?;
            Ok(outputs.swap_remove(0).expect("rank 0 returns the output"))
        }
    }
}

fn launch_processes(spec: &RunSpec, how: &Launch, exe: &Path) -> Result<AppOutput> {
    let group = CommGroup::new(how.procs, Backend::Sockets, spec.seed).with_timeout(how.timeout);
    let (boot, mut listeners) = Bootstrap::bind_loopback(how.procs, &group)?;
    let dir = tempfile::tempdir().map_err(|e| Error::App(format!("temporary directory: {e}")))?;
    let boot_path = dir.path().join("bootstrap.json");
    boot.write(&boot_path)?;
    let spec_json = serde_json::to_string(spec).map_err(|e| Error::App(e.to_string()))?;

    // workers bind their own ports
    listeners.truncate(1);
    let own = listeners.pop();
    let mut children = Vec::with_capacity(how.procs - 1);
    for rank in 1..how.procs {
        let child = Command::new(exe)
            .arg("worker")
            .arg("--rank")
            .arg(rank.to_string())
            .arg("--bootstrap")
            .arg(&boot_path)
            .arg("--spec")
            .arg(&spec_json)
            .stdin(Stdio::null())
            .stdout(Stdio::null())
            .stderr(Stdio::inherit())
            .spawn();
        match child {
            Ok(c) => children.push(c),
            Err(e) => {
                kill_all(&mut children);
                return Err(Error::App(format!("starting worker {rank}: {e}")));
            }
        }
    }

    let mine = SocketTransport::connect(&boot, 0, own)
        .map_err(Error::from)
        .and_then(|t| {
            let comm = Comm::new(0, how.procs, spec.seed, Box::new(t));
            let out = execute(spec, &comm);
            if out.is_err() {
                comm.abort();
            }
            out
        });
    if mine.is_err() {
        // give workers a moment to notice, then stop them
        wait_all(&mut children, Instant::now() + Duration::from_secs(5));
        kill_all(&mut children);
    }
    let statuses = wait_all(&mut children, Instant::now() + how.timeout);
    kill_all(&mut children);

    let failed_worker = statuses
        .iter()
        .enumerate()
        .find(|(_, s)| !matches!(s, Some(true)))
        .map(|(i, s)| (i + 1, *s));
    match (mine, failed_worker) {
        (Ok(out), None) => Ok(out.expect("rank 0 returns the output")),
        (Err(e), None) => Err(Error::RankFailed { rank: 0, source: Box::new(e) }),
        (Err(e), Some(_)) if !e.is_consequential() => Err(Error::RankFailed { rank: 0, source: Box::new(e) }),
        (_, Some((rank, status))) => Err(Error::RankFailed {
            rank,
            source: Box::new(Error::App(match status {
                Some(_) => "worker process exited with an error".into(),
                None => "worker process did not finish".into(),
            })),
        }),
    }
}

/// Waits until every child exits or `deadline` passes. `Some(success)` per
/// child that exited.
fn wait_all(children: &mut [Child], deadline: Instant) -> Vec<Option<bool>> {
    let mut status: Vec<Option<bool>> = vec![None; children.len()];
    loop {
        for (child, s) in children.iter_mut().zip(status.iter_mut()) {
            if s.is_none() {
                if let Ok(Some(exit)) = child.try_wait() {
                    *s = Some(exit.success());
                }
            }
        }
        if status.iter().all(Option::is_some) || Instant::now() >= deadline {
            return status;
        }
        std::thread::sleep(Duration::from_millis(5));
    }
}

fn kill_all(children: &mut [Child]) {
    for c in children.iter_mut() {
        if let Ok(None) = c.try_wait() {
            let _ = c.kill();
            let _ = c.wait();
        }
    }
}

/// Entry point of a worker process started by [`launch`].
pub fn run_worker(rank: usize, bootstrap: &Path, spec: &RunSpec) -> Result<()> {
    let boot = Bootstrap::read(bootstrap)?;
    let transport = SocketTransport::connect(&boot, rank, None)?;
    let comm = Comm::new(rank, boot.size(), boot.base_seed, Box::new(transport));
    let out = execute(spec, &comm);
    if out.is_err() {
        comm.abort();
    }
    out.map(|_| ())
}
