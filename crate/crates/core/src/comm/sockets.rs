//! Loopback TCP transport.
//!
//! Ranks form a full mesh: rank `r` dials every rank below it and accepts
//! connections from every rank above it. The first four bytes a dialer writes
//! are its rank as a little-endian `u32`. After that each message is one
//! frame: a little-endian `u32` byte length `N` followed by `N` payload bytes.
//!
//! Rank/port assignments come from a JSON [`Bootstrap`] document.

use std::io::{self, Read, Write};
use std::net::{Shutdown, TcpListener, TcpStream};
use std::path::Path;
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{CommGroup, Rank, Transport};
use crate::codec::Payload;
use crate::error::CommError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Endpoint {
    pub rank: Rank,
    pub host: String,
    pub port: u16,
}

/// Group description shared by every rank of a sockets group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bootstrap {
    pub ranks: Vec<Endpoint>,
    pub base_seed: u64,
    pub timeout_secs: f64,
}

impl Bootstrap {
    /// Binds one loopback listener per rank on an ephemeral port.
    pub fn bind_loopback(size: usize, group: &CommGroup) -> Result<(Bootstrap, Vec<TcpListener>), CommError> {
        let mut listeners = Vec::with_capacity(size);
        let mut ranks = Vec::with_capacity(size);
        for rank in 0..size {
            let listener = TcpListener::bind(("127.0.0.1", 0))?;
            ranks.push(Endpoint {
                rank,
                host: "127.0.0.1".into(),
                port: listener.local_addr()?.port(),
            });
            listeners.push(listener);
        }
        let boot = Bootstrap {
            ranks,
            base_seed: group.base_seed,
            timeout_secs: group.timeout.as_secs_f64(),
        };
        Ok((boot, listeners))
    }

    pub fn size(&self) -> usize {
        self.ranks.len()
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs)
    }

    fn endpoint(&self, rank: Rank) -> Result<&Endpoint, CommError> {
        self.ranks
            .iter()
            .find(|e| e.rank == rank)
            .ok_or_else(|| CommError::Bootstrap(format!("no endpoint for rank {rank}")))
    }

    pub fn validate(&self) -> Result<(), CommError> {
        if self.ranks.is_empty() {
            return Err(CommError::Bootstrap("empty rank list".into()));
        }
        for r in 0..self.size() {
            self.endpoint(r)?;
        }
        if !(self.timeout_secs > 0.0 && self.timeout_secs.is_finite()) {
            return Err(CommError::Bootstrap("timeout_secs must be positive".into()));
        }
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<(), CommError> {
        let json = serde_json::to_string_pretty(self).map_err(|e| CommError::Bootstrap(e.to_string()))?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Bootstrap, CommError> {
        let text = std::fs::read_to_string(path)?;
        let boot: Bootstrap = serde_json::from_str(&text).map_err(|e| CommError::Bootstrap(e.to_string()))?;
        boot.validate()?;
        Ok(boot)
    }
}

pub fn write_frame<W: Write>(w: &mut W, bytes: &[u8]) -> Result<(), CommError> {
    let len = u32::try_from(bytes.len()).map_err(|_| CommError::FrameTooLarge(bytes.len()))?;
    w.write_all(&len.to_le_bytes())?;
    w.write_all(bytes)?;
    Ok(())
}

/// Reads one frame; `Ok(None)` on a clean end of stream at a frame boundary.
pub fn read_frame<R: Read>(r: &mut R) -> io::Result<Option<Vec<u8>>> {
    let mut len = [0u8; 4];
    let mut filled = 0;
    while filled < 4 {
        match r.read(&mut len[filled..]) {
            Ok(0) if filled == 0 => return Ok(None),
            Ok(0) => return Err(io::ErrorKind::UnexpectedEof.into()),
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    let mut buf = vec![0u8; u32::from_le_bytes(len) as usize];
    r.read_exact(&mut buf)?;
    Ok(Some(buf))
}

struct Peer {
    writer: Mutex<TcpStream>,
    inbox: Receiver<io::Result<Payload>>,
    reader: Option<JoinHandle<()>>,
}

pub struct SocketTransport {
    rank: Rank,
    peers: Vec<Option<Peer>>,
    timeout: Duration,
}

fn dial(endpoint: &Endpoint, deadline: Instant) -> Result<TcpStream, CommError> {
    loop {
        match TcpStream::connect((endpoint.host.as_str(), endpoint.port)) {
            Ok(s) => return Ok(s),
            Err(e) if Instant::now() >= deadline => return Err(e.into()),
            Err(_) => std::thread::sleep(Duration::from_millis(10)),
        }
    }
}

impl SocketTransport {
    /// Joins the mesh described by `boot` as `rank`. Pass a pre-bound
    /// `listener` to avoid racing for the port; otherwise the endpoint's port
    /// is bound here.
    pub fn connect(boot: &Bootstrap, rank: Rank, listener: Option<TcpListener>) -> Result<Self, CommError> {
        boot.validate()?;
        let size = boot.size();
        if rank >= size {
            return Err(CommError::Bootstrap(format!("rank {rank} outside group of {size}")));
        }
        let timeout = boot.timeout();
        let deadline = Instant::now() + timeout;
        let listener = match listener {
            Some(l) => l,
            None => {
                let me = boot.endpoint(rank)?;
                TcpListener::bind((me.host.as_str(), me.port))?
            }
        };

        let mut streams: Vec<Option<TcpStream>> = (0..size).map(|_| None).collect();
        for (peer, slot) in streams.iter_mut().enumerate().take(rank) {
            let mut s = dial(boot.endpoint(peer)?, deadline)?;
            s.write_all(&(rank as u32).to_le_bytes())?;
            *slot = Some(s);
        }
        listener.set_nonblocking(true)?;
        let mut pending = size - rank - 1;
        while pending > 0 {
            match listener.accept() {
                Ok((mut s, _)) => {
                    s.set_nonblocking(false)?;
                    s.set_read_timeout(Some(timeout))?;
                    let mut id = [0u8; 4];
                    s.read_exact(&mut id)?;
                    s.set_read_timeout(None)?;
                    let peer = u32::from_le_bytes(id) as usize;
                    if peer <= rank || peer >= size || streams[peer].is_some() {
                        return Err(CommError::Bootstrap(format!("unexpected handshake from rank {peer}")));
                    }
                    streams[peer] = Some(s);
                    pending -= 1;
                }
                Err(e) if e.kind() == io::ErrorKind::WouldBlock => {
                    if Instant::now() >= deadline {
                        return Err(CommError::Timeout {
                            rank,
                            peer: (0..size).find(|&p| p > rank && streams[p].is_none()).unwrap_or(rank),
                            secs: timeout.as_secs_f64(),
                        });
                    }
                    std::thread::sleep(Duration::from_millis(2));
                }
                Err(e) => return Err(e.into()),
            }
        }

        let mut peers = Vec::with_capacity(size);
        for (peer, stream) in streams.into_iter().enumerate() {
            let Some(stream) = stream else {
                peers.push(None);
                continue;
            };
            stream.set_nodelay(true)?;
            let mut read_half = stream.try_clone()?;
            let (tx, rx) = mpsc::channel();
            let reader = std::thread::Builder::new()
                .name(format!("rank-{rank}-from-{peer}"))
                .spawn(move || loop {
                    match read_frame(&mut read_half) {
                        Ok(Some(bytes)) => {
                            // keep draining after the receiver is gone so the
                            // peer never sees a reset
                            let _ = tx.send(Ok(Payload::new(bytes)));
                        }
                        Ok(None) => break,
                        Err(e) => {
                            let _ = tx.send(Err(e));
                            break;
                        }
                    }
                })?;
            peers.push(Some(Peer {
                writer: Mutex::new(stream),
                inbox: rx,
                reader: Some(reader),
            }));
        }
        Ok(SocketTransport { rank, peers, timeout })
    }

    fn peer(&self, other: Rank) -> Result<&Peer, CommError> {
        self.peers
            .get(other)
            .and_then(Option::as_ref)
            .ok_or(CommError::InvalidRank {
                rank: self.rank,
                peer: other,
                size: self.peers.len(),
            })
    }
}

impl Transport for SocketTransport {
    fn send(&self, dest: Rank, payload: Payload) -> Result<(), CommError> {
        let peer = self.peer(dest)?;
        let mut w = peer.writer.lock().unwrap_or_else(|e| e.into_inner());
        write_frame(&mut *w, payload.as_bytes())
    }

    fn recv(&self, source: Rank) -> Result<Payload, CommError> {
        let peer = self.peer(source)?;
        match peer.inbox.recv_timeout(self.timeout) {
            Ok(Ok(p)) => Ok(p),
            Ok(Err(e)) => Err(e.into()),
            Err(RecvTimeoutError::Timeout) => Err(CommError::Timeout {
                rank: self.rank,
                peer: source,
                secs: self.timeout.as_secs_f64(),
            }),
            Err(RecvTimeoutError::Disconnected) => Err(CommError::PeerExited {
                rank: self.rank,
                peer: source,
            }),
        }
    }
}

impl Drop for SocketTransport {
    fn drop(&mut self) {
        // half-close, then wait for every peer to do the same so no frame is
        // lost to a connection reset
        for peer in self.peers.iter().flatten() {
            let w = peer.writer.lock().unwrap_or_else(|e| e.into_inner());
            let _ = w.shutdown(Shutdown::Write);
        }
        for peer in self.peers.iter_mut().flatten() {
            if let Some(h) = peer.reader.take() {
                let _ = h.join();
            }
        }
    }
}
