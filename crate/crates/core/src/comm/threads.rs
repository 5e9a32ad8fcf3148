//! In-process transport: one mailbox per ordered rank pair behind a single
//! lock. Deterministic, and able to tell when every live rank is blocked.

use std::collections::VecDeque;
use std::sync::{Arc, Condvar, Mutex, MutexGuard};

use super::{Rank, Transport};
use crate::codec::Payload;
use crate::error::CommError;

struct State {
    size: usize,
    /// `queues[dest * size + source]`
    queues: Vec<VecDeque<Payload>>,
    waiting_on: Vec<Option<Rank>>,
    finished: Vec<bool>,
    aborted_by: Option<Rank>,
    deadlock: Option<String>,
}

impl State {
    fn queue(&mut self, dest: Rank, source: Rank) -> &mut VecDeque<Payload> {
        &mut self.queues[dest * self.size + source]
    }

    fn is_blocked(&self, rank: Rank) -> bool {
        if self.finished[rank] {
            return true;
        }
        match self.waiting_on[rank] {
            Some(src) => self.queues[rank * self.size + src].is_empty(),
            None => false,
        }
    }

    fn describe_waits(&self) -> String {
        (0..self.size)
            .map(|r| match (self.finished[r], self.waiting_on[r]) {
                (true, _) => format!("rank {r} finished"),
                (false, Some(src)) => format!("rank {r} waits on {src}"),
                (false, None) => format!("rank {r} running"),
            })
            .collect::<Vec<_>>()
            .join(", ")
    }
}

struct Shared {
    state: Mutex<State>,
    wake: Condvar,
}

impl Shared {
    fn lock(&self) -> MutexGuard<'_, State> {
        // a panicking rank never holds the lock across user code
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }
}

pub struct ThreadTransport {
    rank: Rank,
    shared: Arc<Shared>,
}

impl ThreadTransport {
    /// Creates connected transports for ranks `0..size`.
    pub fn group(size: usize) -> Vec<ThreadTransport> {
        let shared = Arc::new(Shared {
            state: Mutex::new(State {
                size,
                queues: (0..size * size).map(|_| VecDeque::new()).collect(),
                waiting_on: vec![None; size],
                finished: vec![false; size],
                aborted_by: None,
                deadlock: None,
            }),
            wake: Condvar::new(),
        });
        (0..size)
            .map(|rank| ThreadTransport {
                rank,
                shared: Arc::clone(&shared),
            })
            .collect()
    }
}

impl Transport for ThreadTransport {
    fn send(&self, dest: Rank, payload: Payload) -> Result<(), CommError> {
        let mut st = self.shared.lock();
        st.queue(dest, self.rank).push_back(payload);
        drop(st);
        self.shared.wake.notify_all();
        Ok(())
    }

    fn recv(&self, source: Rank) -> Result<Payload, CommError> {
        let me = self.rank;
        let mut st = self.shared.lock();
        loop {
            if let Some(p) = st.queue(me, source).pop_front() {
                st.waiting_on[me] = None;
                return Ok(p);
            }
            st.waiting_on[me] = Some(source);
            if let Some(detail) = &st.deadlock {
                return Err(CommError::Deadlock(detail.clone()));
            }
            if let Some(failed) = st.aborted_by {
                return Err(CommError::Aborted { failed });
            }
            if st.finished[source] {
                st.waiting_on[me] = None;
                return Err(CommError::PeerExited { rank: me, peer: source });
            }
            if (0..st.size).all(|r| st.is_blocked(r)) {
                let detail = st.describe_waits();
                st.deadlock = Some(detail.clone());
                drop(st);
                self.shared.wake.notify_all();
                return Err(CommError::Deadlock(detail));
            }
            st = self
                .shared
                .wake
                .wait(st)
                .unwrap_or_else(|e| e.into_inner());
        }
    }

    fn abort(&self) {
        let mut st = self.shared.lock();
        st.aborted_by.get_or_insert(self.rank);
        drop(st);
        self.shared.wake.notify_all();
    }
}

impl Drop for ThreadTransport {
    fn drop(&mut self) {
        let mut st = self.shared.lock();
        st.finished[self.rank] = true;
        st.waiting_on[self.rank] = None;
        drop(st);
        self.shared.wake.notify_all();
    }
}
