//! The master/worker round protocol.
//!
//! Round 0: the master fits an l1-regularized model on its own shard.
//! Round t+1: the master broadcasts the current iterate, every worker
//! replies with its local gradient there, and the master re-solves its
//! local problem with the linear shift `mean_j grad L_j - grad L_0`.

pub mod bounds;
pub mod schedule;
pub mod transport;
pub mod wire;

use std::time::{Duration, Instant};

use log::debug;

pub use bounds::{bound_rhs, contraction_factors, BoundEstimate};
pub use schedule::{lambda_at, LambdaSchedule, OracleContext, ScheduleContext};
pub use transport::{InProcessTransport, TcpMasterTransport, Traffic, Transport, WorkerNode};
pub use wire::{MessageKind, RoundMessage};

use crate::error::{Error, Result};
use crate::loss::{loss_gradient, mean_in_order};
use crate::model::{l1_norm, l2_norm, Dataset, DenseVector, GroundTruth, LossSpec, Shard};
use crate::prox_solver::{solve, ShiftedProblem, SolverConfig, SolverReport};

/// One row of a run: the iterate produced in `round` and what it cost.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub round: u32,
    pub lambda: f64,
    pub beta: DenseVector,
    pub solver: Option<SolverReport>,
    pub solver_iterations: usize,
    /// Model and gradient values exchanged in this round, 8 bytes each.
    pub payload_bytes: u64,
    /// Framing bytes for the same messages, kept apart from the payload count.
    pub header_bytes: u64,
    pub wall_time: Duration,
    pub l1_error: Option<f64>,
    pub l2_error: Option<f64>,
    /// Whether the local-contraction precondition held at the previous
    /// iterate; only known when ground truth is available.
    pub contraction_condition: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunTrace {
    pub records: Vec<RoundRecord>,
    /// Set by first-order baselines whose objective kept rising.
    pub diverged: bool,
}

impl RunTrace {
    pub fn last_beta(&self) -> Option<&DenseVector> {
        self.records.last().map(|r| &r.beta)
    }

    pub fn cumulative_payload_bytes(&self) -> u64 {
        self.records.iter().map(|r| r.payload_bytes).sum()
    }
}

/// Payload bytes of one round: a p-vector to and from each non-master machine.
pub fn round_payload_bytes(m: usize, p: usize) -> u64 {
    2 * (m as u64 - 1) * p as u64 * 8
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdslSettings {
    pub schedule: LambdaSchedule,
    pub solver: SolverConfig,
}

fn errors(beta: &DenseVector, truth: Option<&GroundTruth>) -> (Option<f64>, Option<f64>) {
    match truth {
        Some(t) => {
            let d = beta.sub(t.beta_star()).expect("lengths validated at construction");
            (Some(l1_norm(&d)), Some(l2_norm(&d)))
        }
        None => (None, None),
    }
}

/// Master side of a run. Owns the transport and the master's shard.
pub struct EdslMaster<'a, T: Transport> {
    shard: &'a Shard,
    spec: LossSpec,
    settings: EdslSettings,
    transport: T,
    truth: Option<&'a GroundTruth>,
    oracle: Option<&'a OracleContext>,
}

impl<'a, T: Transport> EdslMaster<'a, T> {
    pub fn new(shard: &'a Shard, spec: LossSpec, settings: EdslSettings, transport: T) -> Self {
        Self { shard, spec, settings, transport, truth: None, oracle: None }
    }

    /// Ground truth used only to record per-round estimation errors.
    pub fn with_truth(mut self, truth: &'a GroundTruth) -> Self {
        self.truth = Some(truth);
        self
    }

    /// Oracle quantities needed by the theoretical schedule.
    pub fn with_oracle(mut self, oracle: &'a OracleContext) -> Self {
        self.oracle = Some(oracle);
        self
    }

    pub fn machines(&self) -> usize {
        self.transport.machines()
    }

    fn lambda(&self, t: u32, prev: Option<&DenseVector>) -> Result<f64> {
        let ctx = ScheduleContext {
            n: self.shard.n(),
            m: self.machines(),
            p: self.shard.p(),
            prev_beta: prev.map(|b| b.as_slice()),
            oracle: self.oracle,
        };
        lambda_at(&self.settings.schedule, t, &ctx)
    }

    fn condition(&self, prev: Option<&DenseVector>) -> Option<bool> {
        let oracle = self.oracle?;
        let p = self.shard.p();
        let zero = DenseVector::zeros(p);
        let prev = prev.unwrap_or(&zero);
        let delta = match self.settings.schedule {
            LambdaSchedule::Theoretical { delta } => delta,
            _ => schedule::DEFAULT_DELTA,
        };
        Some(oracle.contraction_condition(prev, self.shard.n(), delta))
    }

    /// Round 0: local l1-regularized fit on the master's shard. No traffic.
    pub fn init(&mut self) -> Result<RoundRecord> {
        let start = Instant::now();
        let lambda = self.lambda(0, None)?;
        let problem = ShiftedProblem::plain(self.spec, vec![self.shard], lambda)?;
        let report = solve(&problem, &DenseVector::zeros(self.shard.p()), &self.settings.solver)?;
        let (l1_error, l2_error) = errors(&report.beta_hat, self.truth);
        Ok(RoundRecord {
            round: 0,
            lambda,
            beta: report.beta_hat.clone(),
            solver_iterations: report.iterations,
            solver: Some(report),
            payload_bytes: 0,
            header_bytes: 0,
            wall_time: start.elapsed(),
            l1_error,
            l2_error,
            contraction_condition: None,
        })
    }

    /// Linear shift `mean_j grad L_j(beta) - grad L_0(beta)` built from the
    /// master's own gradient and the workers' reports (machine order).
    pub fn shift(&mut self, round: u32, beta: &DenseVector) -> Result<(DenseVector, DenseVector, DenseVector)> {
        let own = loss_gradient(&self.spec, self.shard, beta)?;
        let mut grads = Vec::with_capacity(self.machines());
        grads.push(own.clone());
        grads.extend(self.transport.exchange(round, beta)?);
        let avg = mean_in_order(&grads);
        let shift = DenseVector::from_vec_unchecked(avg.iter().zip(own.iter()).map(|(a, o)| a - o).collect());
        Ok((shift, own, avg))
    }

    /// Produces `beta_{t+1}` from `beta_t`.
    pub fn round(&mut self, beta_t: &DenseVector, t: u32) -> Result<RoundRecord> {
        let lambda = self.lambda(t + 1, Some(beta_t))?;
        self.round_with_lambda(beta_t, t, lambda)
    }

    /// A round at an explicit level instead of the schedule's. `lambda = 0`
    /// with squared loss gives the sub-sampled Newton step.
    pub fn round_with_lambda(&mut self, beta_t: &DenseVector, t: u32, lambda: f64) -> Result<RoundRecord> {
        if beta_t.len() != self.shard.p() {
            return Err(Error::dim(self.shard.p(), beta_t.len()));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be finite and nonnegative, got {lambda}")));
        }
        let start = Instant::now();
        let before = self.transport.traffic();
        let (shift, _, _) = self.shift(t, beta_t)?;
        let problem = ShiftedProblem::new(self.spec, vec![self.shard], shift, lambda)?;
        let report = solve(&problem, beta_t, &self.settings.solver)?;
        let spent = self.transport.traffic().since(&before);
        let (l1_error, l2_error) = errors(&report.beta_hat, self.truth);
        debug!("round {}: lambda {lambda:.3e}, {} solver iterations", t + 1, report.iterations);
        Ok(RoundRecord {
            round: t + 1,
            lambda,
            beta: report.beta_hat.clone(),
            solver_iterations: report.iterations,
            solver: Some(report),
            payload_bytes: spent.payload_bytes,
            header_bytes: spent.header_bytes,
            wall_time: start.elapsed(),
            l1_error,
            l2_error,
            contraction_condition: self.condition(Some(beta_t)),
        })
    }

    /// Runs rounds `0..=rounds` and shuts the workers down.
    pub fn run(mut self, rounds: u32) -> Result<RunTrace> {
        let result = self.run_rounds(rounds);
        let shut = self.transport.shutdown(rounds);
        let trace = result?;
        shut?;
        Ok(trace)
    }

    fn run_rounds(&mut self, rounds: u32) -> Result<RunTrace> {
        let mut trace = RunTrace::default();
        let first = self.init()?;
        let mut beta = first.beta.clone();
        trace.records.push(first);
        for t in 0..rounds {
            let rec = self.round(&beta, t)?;
            beta = rec.beta.clone();
            trace.records.push(rec);
        }
        Ok(trace)
    }
}

/// Runs the protocol with workers on local threads.
pub fn run_edsl(
    dataset: &Dataset,
    spec: LossSpec,
    settings: EdslSettings,
    rounds: u32,
    truth: Option<&GroundTruth>,
    oracle: Option<&OracleContext>,
) -> Result<RunTrace> {
    if matches!(settings.schedule, LambdaSchedule::Theoretical { .. }) && oracle.is_none() {
        return Err(Error::Config("theoretical lambda schedule requires ground truth".into()));
    }
    let transport = InProcessTransport::new(dataset, spec);
    let mut master = EdslMaster::new(dataset.master(), spec, settings, transport);
    if let Some(t) = truth {
        master = master.with_truth(t);
    }
    if let Some(o) = oracle {
        master = master.with_oracle(o);
    }
    master.run(rounds)
}
