//! Master-side transports. A transport delivers the current iterate to every
//! worker and returns their gradient reports ordered by machine id.

use std::collections::BTreeSet;
use std::io::{self, ErrorKind};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use log::{debug, info, warn};

use super::wire::{MessageKind, RoundMessage, HEADER_LEN};
use crate::error::{Error, Result};
use crate::loss::loss_gradient;
use crate::model::{Dataset, DenseVector, LossSpec, Shard};

pub const DEFAULT_ROUND_TIMEOUT: Duration = Duration::from_secs(30);

/// Cumulative traffic seen by the master, split into value payload and framing.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Traffic {
    pub payload_bytes: u64,
    pub header_bytes: u64,
    pub messages: u64,
}

impl Traffic {
    fn record(&mut self, msg: &RoundMessage) {
        self.payload_bytes += msg.payload_bytes();
        self.header_bytes += HEADER_LEN as u64;
        self.messages += 1;
    }

    pub fn since(&self, earlier: &Traffic) -> Traffic {
        Traffic {
            payload_bytes: self.payload_bytes - earlier.payload_bytes,
            header_bytes: self.header_bytes - earlier.header_bytes,
            messages: self.messages - earlier.messages,
        }
    }
}

pub trait Transport {
    /// Number of machines including the master.
    fn machines(&self) -> usize;

    /// Sends `beta` to every worker and collects the gradient of machines
    /// `1..m`, in that order.
    fn exchange(&mut self, round: u32, beta: &DenseVector) -> Result<Vec<DenseVector>>;

    fn traffic(&self) -> Traffic;

    fn shutdown(&mut self, round: u32) -> Result<()>;
}

/// The worker side of a round: answer a broadcast with the local gradient.
#[derive(Debug, Clone)]
pub struct WorkerNode {
    shard: Arc<Shard>,
    spec: LossSpec,
}

impl WorkerNode {
    pub fn new(shard: Arc<Shard>, spec: LossSpec) -> Self {
        Self { shard, spec }
    }

    pub fn machine_id(&self) -> u16 {
        self.shard.machine_id() as u16
    }

    /// `Ok(None)` means the master asked us to stop.
    pub fn handle(&self, msg: &RoundMessage) -> Result<Option<RoundMessage>> {
        match msg.kind {
            MessageKind::Shutdown => Ok(None),
            MessageKind::ModelBroadcast => {
                let beta = msg
                    .payload
                    .as_ref()
                    .ok_or_else(|| Error::Transport("broadcast without payload".into()))?;
                let g = loss_gradient(&self.spec, &self.shard, beta)?;
                Ok(Some(RoundMessage::report(msg.round, self.machine_id(), g)))
            }
            MessageKind::GradientReport => {
                Err(Error::Transport(format!("worker {} got a gradient report", self.machine_id())))
            }
        }
    }
}

fn check_report(msg: &RoundMessage, round: u32, p: usize, m: usize) -> Result<usize> {
    if msg.kind != MessageKind::GradientReport || msg.round != round {
        return Err(Error::Transport(format!(
            "expected gradient report for round {round}, got {:?} for round {}",
            msg.kind, msg.round
        )));
    }
    let sender = msg.sender as usize;
    if sender == 0 || sender >= m {
        return Err(Error::Transport(format!("report from unknown machine {sender}")));
    }
    match &msg.payload {
        Some(g) if g.len() == p => Ok(sender),
        Some(g) => Err(Error::dim(p, g.len())),
        None => Err(Error::Transport(format!("empty report from machine {sender}"))),
    }
}

enum ThreadReply {
    Report(RoundMessage),
    Failed(u16, String),
}

/// Workers run on local threads and exchange messages over channels.
pub struct InProcessTransport {
    p: usize,
    to_workers: Vec<Sender<RoundMessage>>,
    from_workers: Receiver<ThreadReply>,
    handles: Vec<JoinHandle<()>>,
    traffic: Traffic,
    closed: bool,
}

impl InProcessTransport {
    pub fn new(dataset: &Dataset, spec: LossSpec) -> Self {
        let (reply_tx, reply_rx) = mpsc::channel();
        let mut to_workers = Vec::new();
        let mut handles = Vec::new();
        for shard in dataset.shards().iter().skip(1) {
            let (tx, rx) = mpsc::channel::<RoundMessage>();
            let node = WorkerNode::new(Arc::clone(shard), spec);
            let reply = reply_tx.clone();
            handles.push(thread::spawn(move || {
                while let Ok(msg) = rx.recv() {
                    match node.handle(&msg) {
                        Ok(Some(out)) => {
                            if reply.send(ThreadReply::Report(out)).is_err() {
                                break;
                            }
                        }
                        Ok(None) => break,
                        Err(e) => {
                            let _ = reply.send(ThreadReply::Failed(node.machine_id(), e.to_string()));
                            break;
                        }
                    }
                }
            }));
            to_workers.push(tx);
        }
        Self {
            p: dataset.p(),
            to_workers,
            from_workers: reply_rx,
            handles,
            traffic: Traffic::default(),
            closed: false,
        }
    }
}

impl Transport for InProcessTransport {
    fn machines(&self) -> usize {
        self.to_workers.len() + 1
    }

    fn exchange(&mut self, round: u32, beta: &DenseVector) -> Result<Vec<DenseVector>> {
        let m = self.machines();
        let mut missing = BTreeSet::new();
        for (k, tx) in self.to_workers.iter().enumerate() {
            let msg = RoundMessage::broadcast(round, beta.clone());
            self.traffic.record(&msg);
            if tx.send(msg).is_err() {
                missing.insert(k as u16 + 1);
            }
        }
        let mut slots: Vec<Option<DenseVector>> = vec![None; m];
        let expected = m - 1 - missing.len();
        for _ in 0..expected {
            match self.from_workers.recv() {
                Ok(ThreadReply::Report(msg)) => {
                    let sender = check_report(&msg, round, self.p, m)?;
                    self.traffic.record(&msg);
                    slots[sender] = msg.payload;
                }
                Ok(ThreadReply::Failed(id, err)) => {
                    warn!("worker {id} failed: {err}");
                    missing.insert(id);
                }
                Err(_) => break,
            }
        }
        for (j, slot) in slots.iter().enumerate().skip(1) {
            if slot.is_none() {
                missing.insert(j as u16);
            }
        }
        if !missing.is_empty() {
            return Err(Error::RoundFailure { round, missing: missing.into_iter().collect() });
        }
        Ok(slots.into_iter().skip(1).map(|s| s.expect("checked above")).collect())
    }

    fn traffic(&self) -> Traffic {
        self.traffic
    }

    fn shutdown(&mut self, round: u32) -> Result<()> {
        if self.closed {
            return Ok(());
        }
        self.closed = true;
        for tx in &self.to_workers {
            let msg = RoundMessage::shutdown(round);
            self.traffic.record(&msg);
            let _ = tx.send(msg);
        }
        for h in self.handles.drain(..) {
            let _ = h.join();
        }
        Ok(())
    }
}

impl Drop for InProcessTransport {
    fn drop(&mut self) {
        let _ = self.shutdown(0);
    }
}

/// Master end of the TCP transport: one connection per worker.
pub struct TcpMasterTransport {
    p: usize,
    streams: Vec<TcpStream>, // index k holds machine k + 1
    timeout: Duration,
    traffic: Traffic,
    closed: bool,
}

impl TcpMasterTransport {
    /// Waits for `m - 1` workers to connect and identify themselves.
    pub fn accept(listener: &TcpListener, m: usize, p: usize, timeout: Duration) -> Result<Self> {
        let deadline = Instant::now() + timeout;
        let mut slots: Vec<Option<TcpStream>> = (1..m).map(|_| None).collect();
        listener.set_nonblocking(true)?;
        while slots.iter().any(Option::is_none) {
            match listener.accept() {
                Ok((mut stream, addr)) => {
                    stream.set_nonblocking(false)?;
                    stream.set_nodelay(true)?;
                    stream.set_read_timeout(Some(timeout))?;
                    let hello = RoundMessage::read_from(&mut stream)?;
                    if !hello.is_handshake() {
                        return Err(Error::Transport(format!("{addr}: expected handshake, got {:?}", hello.kind)));
                    }
                    let id = hello.sender as usize;
                    if id == 0 || id >= m {
                        return Err(Error::Transport(format!("{addr}: machine id {id} outside 1..{m}")));
                    }
                    if slots[id - 1].is_some() {
                        return Err(Error::Transport(format!("{addr}: machine id {id} connected twice")));
                    }
                    debug!("worker {id} connected from {addr}");
                    slots[id - 1] = Some(stream);
                }
                Err(e) if e.kind() == ErrorKind::WouldBlock => {
                    if Instant::now() >= deadline {
                        let missing: Vec<u16> = slots
                            .iter()
                            .enumerate()
                            .filter(|(_, s)| s.is_none())
                            .map(|(k, _)| k as u16 + 1)
                            .collect();
                        return Err(Error::RoundFailure { round: super::wire::HANDSHAKE_ROUND, missing });
                    }
                    thread::sleep(Duration::from_millis(5));
                }
                Err(e) => return Err(e.into()),
            }
        }
        listener.set_nonblocking(false)?;
        info!("all {} workers connected", m - 1);
        let mut traffic = Traffic::default();
        for _ in 1..m {
            traffic.record(&RoundMessage::handshake(0));
        }
        Ok(Self {
            p,
            streams: slots.into_iter().map(|s| s.expect("all slots filled")).collect(),
            timeout,
            traffic,
            closed: false,
        })
    }
}

impl Transport for TcpMasterTransport {
    fn machines(&self) -> usize {
        self.streams.len() + 1
    }

    fn exchange(&mut self, round: u32, beta: &DenseVector) -> Result<Vec<DenseVector>> {
        let m = self.machines();
        let deadline = Instant::now() + self.timeout;
        let msg = RoundMessage::broadcast(round, beta.clone());
        let frame = msg.encode();
        let mut missing = Vec::new();
        for (k, s) in self.streams.iter_mut().enumerate() {
            self.traffic.record(&msg);
            if let Err(e) = io::Write::write_all(s, &frame) {
                warn!("send to machine {} failed: {e}", k + 1);
                missing.push(k as u16 + 1);
            }
        }
        let mut grads = Vec::with_capacity(m - 1);
        for (k, s) in self.streams.iter_mut().enumerate() {
            let id = k as u16 + 1;
            if missing.contains(&id) {
                continue;
            }
            let left = deadline.saturating_duration_since(Instant::now()).max(Duration::from_millis(1));
            s.set_read_timeout(Some(left))?;
            match RoundMessage::read_from(s) {
                Ok(reply) => {
                    let sender = check_report(&reply, round, self.p, m)?;
                    if sender != id as usize {
                        return Err(Error::Transport(format!("connection of machine {id} reported as {sender}")));
                    }
                    self.traffic.record(&reply);
                    grads.push(reply.payload.expect("checked"));
                }
                Err(Error::Io(e)) => {
                    warn!("no report from machine {id}: {e}");
                    missing.push(id);
                }
                Err(e) => return Err(e),
            }
        }
        if !missing.is_empty() {
            missing.sort_unstable();
            return Err(Error::RoundFailure { round, missing });
        }
        Ok(grads)
    }

    fn traffic(&self) -> Traffic {
        self.traffic
    }

    fn shutdown(&mut self, round: u32) -> Result<()> {
        if self.closed {
            return Ok(());
        }
        self.closed = true;
        let msg = RoundMessage::shutdown(round);
        let frame = msg.encode();
        for s in &mut self.streams {
            self.traffic.record(&msg);
            let _ = io::Write::write_all(s, &frame);
        }
        Ok(())
    }
}

impl Drop for TcpMasterTransport {
    fn drop(&mut self) {
        let _ = self.shutdown(0);
    }
}

/// Connects to the master, retrying until `connect_timeout`, then serves
/// rounds until shutdown. Returns the number of reports sent.
pub fn run_tcp_worker<A: ToSocketAddrs>(addr: A, node: &WorkerNode, connect_timeout: Duration) -> Result<usize> {
    let deadline = Instant::now() + connect_timeout;
    let addrs: Vec<_> = addr.to_socket_addrs()?.collect();
    let mut stream = loop {
        match addrs.iter().find_map(|a| TcpStream::connect(a).ok()) {
            Some(s) => break s,
            None if Instant::now() < deadline => thread::sleep(Duration::from_millis(20)),
            None => {
                return Err(Error::Transport(format!("could not reach master at {addrs:?}")));
            }
        }
    };
    stream.set_nodelay(true)?;
    RoundMessage::handshake(node.machine_id()).write_to(&mut stream)?;
    let mut served = 0;
    loop {
        let msg = RoundMessage::read_from(&mut stream)?;
        match node.handle(&msg)? {
            Some(reply) => {
                reply.write_to(&mut stream)?;
                served += 1;
            }
            None => {
                debug!("worker {} shutting down after {served} rounds", node.machine_id());
                return Ok(served);
            }
        }
    }
}
