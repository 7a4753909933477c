//! Regularization schedules for the rounds of the protocol.

use crate::error::{Error, Result};
use crate::loss::average_gradient;
use crate::model::{l1_norm, linf_norm, Dataset, DenseVector, GroundTruth, LossSpec};

pub const DEFAULT_DELTA: f64 = 0.05;
pub const DEFAULT_DECAY: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaSchedule {
    /// Oracle schedule driven by the distance to the true parameter. For
    /// validation only: it needs ground truth.
    Theoretical { delta: f64 },
    /// `max(c sqrt(log p / (m n)), c sqrt(log p / n) * gamma^t)`.
    Practical { c: f64, gamma: f64 },
    Fixed { lambda: f64 },
}

impl LambdaSchedule {
    pub fn practical(c: f64) -> Self {
        LambdaSchedule::Practical { c, gamma: DEFAULT_DECAY }
    }

    /// `c sqrt(log p / n)`: the level used for round 0.
    pub fn practical_start(c: f64, n: usize, p: usize) -> f64 {
        c * (log_p(p) / n as f64).sqrt()
    }

    /// `c sqrt(log p / (m n))`: the level the practical schedule settles at.
    pub fn practical_floor(c: f64, n: usize, m: usize, p: usize) -> f64 {
        c * (log_p(p) / (m * n) as f64).sqrt()
    }
}

fn log_p(p: usize) -> f64 {
    (p.max(2) as f64).ln()
}

/// Quantities only known when the true parameter is known.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleContext {
    pub beta_star: DenseVector,
    /// `|| (1/m) sum_j grad L_j(beta*) ||_inf`
    pub grad_inf_at_truth: f64,
    /// `max_{j,i} ||x_ji||_inf`
    pub max_abs_x: f64,
    pub smoothness_l: f64,
    pub third_deriv_m: f64,
}

impl OracleContext {
    pub fn from_dataset(dataset: &Dataset, spec: &LossSpec, truth: &GroundTruth) -> Result<Self> {
        let g = average_gradient(spec, &dataset.shard_refs(), truth.beta_star())?;
        Ok(Self {
            beta_star: truth.beta_star().clone(),
            grad_inf_at_truth: linf_norm(&g)?,
            max_abs_x: dataset.max_abs_x(),
            smoothness_l: spec.smoothness_l(),
            third_deriv_m: spec.third_deriv_m(),
        })
    }

    fn l1_distance(&self, beta: &[f64]) -> f64 {
        self.beta_star.iter().zip(beta).map(|(a, b)| (a - b).abs()).sum()
    }

    /// `M max|x| ||beta - beta*||_1 <= L sqrt(log(2p/delta) / n)`
    pub fn contraction_condition(&self, beta: &[f64], n: usize, delta: f64) -> bool {
        let p = self.beta_star.len() as f64;
        let lhs = self.third_deriv_m * self.max_abs_x * self.l1_distance(beta);
        let rhs = self.smoothness_l * ((2.0 * p / delta).ln() / n as f64).sqrt();
        lhs <= rhs
    }
}

pub struct ScheduleContext<'a> {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    /// The iterate the new level is computed from; `None` before round 0,
    /// where the theoretical schedule measures from the zero vector.
    pub prev_beta: Option<&'a [f64]>,
    pub oracle: Option<&'a OracleContext>,
}

/// Regularization level for round `t`.
pub fn lambda_at(schedule: &LambdaSchedule, t: u32, ctx: &ScheduleContext<'_>) -> Result<f64> {
    let lambda = match *schedule {
        LambdaSchedule::Fixed { lambda } => lambda,
        LambdaSchedule::Practical { c, gamma } => {
            if !(c > 0.0) || !(gamma > 0.0 && gamma <= 1.0) {
                return Err(Error::Config(format!("practical schedule needs c > 0 and gamma in (0, 1], got c={c}, gamma={gamma}")));
            }
            let floor = LambdaSchedule::practical_floor(c, ctx.n, ctx.m, ctx.p);
            let start = LambdaSchedule::practical_start(c, ctx.n, ctx.p);
            floor.max(start * gamma.powi(t as i32))
        }
        LambdaSchedule::Theoretical { delta } => {
            let oracle = ctx
                .oracle
                .ok_or_else(|| Error::Config("theoretical lambda schedule requires ground truth".into()))?;
            if !(delta > 0.0 && delta < 1.0) {
                return Err(Error::Config(format!("delta must lie in (0, 1), got {delta}")));
            }
            let dist = match ctx.prev_beta {
                Some(b) => oracle.l1_distance(b),
                None => l1_norm(&oracle.beta_star),
            };
            let x2 = oracle.max_abs_x.powi(2);
            let x3 = oracle.max_abs_x.powi(3);
            let root = ((2.0 * ctx.p as f64 / delta).ln() / ctx.n as f64).sqrt();
            2.0 * oracle.grad_inf_at_truth
                + 2.0 * oracle.smoothness_l * x2 * dist * root
                + 2.0 * oracle.third_deriv_m * x3 * dist * dist
        }
    };
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Config(format!("schedule produced lambda = {lambda} at round {t}")));
    }
    Ok(lambda)
}
