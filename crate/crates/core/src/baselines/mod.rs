//! Comparators for the round protocol: a purely local fit, the pooled
//! (centralized) fit, distributed proximal gradient descent, and the one-shot
//! average of debiased local fits.

pub mod debias;

use std::time::Instant;

use log::warn;
use rayon::prelude::*;

pub use debias::{gram, nodewise_theta, precision_residual, DebiasModel};

use crate::error::{Error, Result};
use crate::loss::{hessian_norm_estimate, loss_gradient, mean_in_order, pointwise_curvature, pooled_value};
use crate::model::{
    dot_unchecked, l1_norm, l2_norm, Dataset, DenseVector, GroundTruth, LossFamily, LossSpec, Matrix, Shard,
};
use crate::protocol::{InProcessTransport, RoundRecord, RunTrace, Transport};
use crate::prox_solver::{soft_threshold, solve, ShiftedProblem, SolverConfig, SolverReport};

/// Avg-Debias fits p nodewise problems per machine; refuse larger p unless forced.
pub const AVG_DEBIAS_MAX_P: usize = 2000;

/// Nodewise fits only shape the correction matrix; they stop earlier than
/// the main solves.
pub const NODEWISE_TOL: f64 = 1e-6;

/// Rounds of rising objective after which proximal gradient is flagged as diverging.
pub const DIVERGENCE_PATIENCE: usize = 10;

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Config(format!("lambda must be positive, got {lambda}")));
    }
    Ok(())
}

/// l1-regularized fit on the master's shard only.
pub fn local(dataset: &Dataset, spec: LossSpec, lambda: f64, cfg: &SolverConfig) -> Result<SolverReport> {
    check_lambda(lambda)?;
    let problem = ShiftedProblem::plain(spec, vec![dataset.master()], lambda)?;
    solve(&problem, &DenseVector::zeros(dataset.p()), cfg)
}

/// l1-regularized fit on every shard pooled into one sample.
pub fn centralize(dataset: &Dataset, spec: LossSpec, lambda: f64, cfg: &SolverConfig) -> Result<SolverReport> {
    check_lambda(lambda)?;
    let problem = ShiftedProblem::plain(spec, dataset.shard_refs(), lambda)?;
    solve(&problem, &DenseVector::zeros(dataset.p()), cfg)
}

/// `(1/m) sum_j L_j(beta) + lambda ||beta||_1`
pub fn global_objective(dataset: &Dataset, spec: &LossSpec, beta: &[f64], lambda: f64) -> f64 {
    let losses: f64 = dataset.shards().iter().map(|s| pooled_value(spec, &[s.as_ref()], beta)).sum();
    losses / dataset.m() as f64 + lambda * l1_norm(beta)
}

/// Step `1 / L` with `L` from power iteration on the pooled Hessian at `init`.
pub fn default_prox_step(dataset: &Dataset, spec: &LossSpec, init: &[f64]) -> f64 {
    let l = hessian_norm_estimate(spec, &dataset.shard_refs(), init, 20);
    if l > 0.0 && l.is_finite() {
        1.0 / l
    } else {
        1.0
    }
}

fn truth_errors(beta: &DenseVector, truth: Option<&GroundTruth>) -> (Option<f64>, Option<f64>) {
    truth.map_or((None, None), |t| {
        let d = beta.sub(t.beta_star()).expect("same p");
        (Some(l1_norm(&d)), Some(l2_norm(&d)))
    })
}

/// Distributed proximal gradient descent: every round gathers all gradients
/// and takes one soft-thresholded step. Uses the same messages as the
/// protocol, so traffic per round is identical.
pub fn prox_gd_distributed(
    dataset: &Dataset,
    spec: LossSpec,
    lambda: f64,
    step: Option<f64>,
    rounds: u32,
    init: &DenseVector,
    truth: Option<&GroundTruth>,
) -> Result<RunTrace> {
    let mut transport = InProcessTransport::new(dataset, spec);
    let trace = prox_gd_with(&mut transport, dataset, spec, lambda, step, rounds, init, truth);
    transport.shutdown(rounds)?;
    trace
}

#[allow(clippy::too_many_arguments)]
pub fn prox_gd_with<T: Transport>(
    transport: &mut T,
    dataset: &Dataset,
    spec: LossSpec,
    lambda: f64,
    step: Option<f64>,
    rounds: u32,
    init: &DenseVector,
    truth: Option<&GroundTruth>,
) -> Result<RunTrace> {
    check_lambda(lambda)?;
    if init.len() != dataset.p() {
        return Err(Error::dim(dataset.p(), init.len()));
    }
    let step = step.unwrap_or_else(|| default_prox_step(dataset, &spec, init));
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::Config(format!("step must be positive, got {step}")));
    }
    let master = dataset.master();
    let mut trace = RunTrace::default();
    let (l1_error, l2_error) = truth_errors(init, truth);
    trace.records.push(RoundRecord {
        round: 0,
        lambda,
        beta: init.clone(),
        solver: None,
        solver_iterations: 0,
        payload_bytes: 0,
        header_bytes: 0,
        wall_time: Default::default(),
        l1_error,
        l2_error,
        contraction_condition: None,
    });
    let mut beta = init.clone();
    let mut objective = global_objective(dataset, &spec, &beta, lambda);
    let mut rising = 0;
    for t in 0..rounds {
        let start = Instant::now();
        let before = transport.traffic();
        let mut grads = vec![loss_gradient(&spec, master, &beta)?];
        grads.extend(transport.exchange(t, &beta)?);
        let g = mean_in_order(&grads);
        let next: Vec<f64> = beta
            .iter()
            .zip(g.iter())
            .map(|(b, gi)| soft_threshold(b - step * gi, step * lambda))
            .collect();
        let next = DenseVector::new(next).map_err(|_| Error::Numeric {
            msg: format!("proximal gradient produced a non-finite iterate in round {}", t + 1),
            last_finite: Some(beta.clone()),
        })?;
        let obj = global_objective(dataset, &spec, &next, lambda);
        if obj > objective {
            rising += 1;
            if rising >= DIVERGENCE_PATIENCE && !trace.diverged {
                warn!("proximal gradient objective rose for {rising} consecutive rounds");
                trace.diverged = true;
            }
        } else {
            rising = 0;
        }
        objective = obj;
        beta = next;
        let spent = transport.traffic().since(&before);
        let (l1_error, l2_error) = truth_errors(&beta, truth);
        trace.records.push(RoundRecord {
            round: t + 1,
            lambda,
            beta: beta.clone(),
            solver: None,
            solver_iterations: 1,
            payload_bytes: spent.payload_bytes,
            header_bytes: spent.header_bytes,
            wall_time: start.elapsed(),
            l1_error,
            l2_error,
            contraction_condition: None,
        });
    }
    Ok(trace)
}

/// `v_i` where `|v_i| > tau`, zero elsewhere.
pub fn hard_threshold(v: &DenseVector, tau: f64) -> DenseVector {
    DenseVector::from_vec_unchecked(v.iter().map(|&x| if x.abs() > tau { x } else { 0.0 }).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AvgDebiasConfig {
    pub lambda: f64,
    /// Nodewise penalty.
    pub gamma: f64,
    /// Hard threshold applied after averaging.
    pub tau: f64,
    pub force: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AvgDebiasReport {
    pub beta: DenseVector,
    /// Average of the debiased local fits before thresholding.
    pub averaged: DenseVector,
    /// Machines whose debiasing failed and were left out of the average.
    pub failed_machines: Vec<usize>,
}

/// Design used by the nodewise fits: `X` for squared loss, rows scaled by
/// `sqrt(l''(<x, beta>))` for logistic loss.
pub fn curvature_design(shard: &Shard, spec: &LossSpec, beta: &[f64]) -> Matrix {
    match spec.family() {
        LossFamily::Squared => shard.xs().clone(),
        LossFamily::Logistic => {
            let xs = shard.xs();
            let mut out = xs.clone();
            for i in 0..xs.rows() {
                let w = pointwise_curvature(spec.family(), dot_unchecked(xs.row(i), beta)).sqrt();
                out.row_mut(i).iter_mut().for_each(|v| *v *= w);
            }
            out
        }
    }
}

/// One machine's debiased estimate `beta_j - Theta_j grad L_j(beta_j)`.
pub fn debiased_local(
    shard: &Shard,
    spec: LossSpec,
    lambda: f64,
    gamma: f64,
    cfg: &SolverConfig,
) -> Result<(DenseVector, f64)> {
    let problem = ShiftedProblem::plain(spec, vec![shard], lambda)?;
    let fit = solve(&problem, &DenseVector::zeros(shard.p()), cfg)?;
    let design = curvature_design(shard, &spec, &fit.beta_hat);
    let model = nodewise_theta(&design, gamma, &SolverConfig { tol: cfg.tol.max(NODEWISE_TOL), ..*cfg })?;
    let residual = precision_residual(&design, &model);
    let grad = loss_gradient(&spec, shard, &fit.beta_hat)?;
    let correction = model.apply(&grad);
    let out: Vec<f64> = fit.beta_hat.iter().zip(&correction).map(|(b, c)| b - c).collect();
    let out = DenseVector::new(out).map_err(|_| Error::Numeric {
        msg: format!("debiased estimate of machine {} is not finite", shard.machine_id()),
        last_finite: Some(fit.beta_hat.clone()),
    })?;
    Ok((out, residual))
}

/// Averages the debiased local fits in machine order, skipping failures.
pub fn debiased_average(dataset: &Dataset, spec: LossSpec, lambda: f64, gamma: f64, force: bool, cfg: &SolverConfig) -> Result<(DenseVector, Vec<usize>)> {
    check_lambda(lambda)?;
    if dataset.p() > AVG_DEBIAS_MAX_P && !force {
        return Err(Error::Config(format!(
            "avg_debias solves p={} nodewise problems per machine; limit is {AVG_DEBIAS_MAX_P} unless forced",
            dataset.p()
        )));
    }
    let results: Vec<Result<(DenseVector, f64)>> = dataset
        .shards()
        .par_iter()
        .map(|s| debiased_local(s, spec, lambda, gamma, cfg))
        .collect();
    let mut kept = Vec::new();
    let mut failed = Vec::new();
    for (j, r) in results.into_iter().enumerate() {
        match r {
            Ok((v, residual)) if residual <= 1.0 => kept.push(v),
            Ok((_, residual)) => {
                warn!("machine {j}: debiasing residual {residual:.3} exceeds 1, dropping");
                failed.push(j);
            }
            Err(e) => {
                warn!("machine {j}: debiasing failed: {e}");
                failed.push(j);
            }
        }
    }
    if kept.is_empty() {
        return Err(Error::Numeric { msg: "debiasing failed on every machine".into(), last_finite: None });
    }
    Ok((mean_in_order(&kept), failed))
}

pub fn avg_debias(dataset: &Dataset, spec: LossSpec, cfg: &AvgDebiasConfig, solver: &SolverConfig) -> Result<AvgDebiasReport> {
    if !(cfg.gamma > 0.0) || !(cfg.tau >= 0.0) {
        return Err(Error::Config(format!("avg_debias needs gamma > 0 and tau >= 0, got {cfg:?}")));
    }
    let (averaged, failed_machines) = debiased_average(dataset, spec, cfg.lambda, cfg.gamma, cfg.force, solver)?;
    Ok(AvgDebiasReport { beta: hard_threshold(&averaged, cfg.tau), averaged, failed_machines })
}

/// Residual standard deviation after a pilot lasso on the shard; a fixed 0.5
/// for logistic loss. Scales the default regularization levels.
pub fn noise_scale(shard: &Shard, spec: &LossSpec, cfg: &SolverConfig) -> Result<f64> {
    if spec.family() == LossFamily::Logistic {
        return Ok(0.5);
    }
    let n = shard.n() as f64;
    let ys = shard.ys();
    let mean = ys.iter().sum::<f64>() / n;
    let sd = (ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n).sqrt();
    if !(sd > 0.0) {
        return Ok(1.0);
    }
    let pilot = 2.0 * sd * ((shard.p().max(2) as f64).ln() / n).sqrt();
    let problem = ShiftedProblem::plain(*spec, vec![shard], pilot)?;
    let fit = solve(&problem, &DenseVector::zeros(shard.p()), cfg)?;
    let resid: Vec<f64> = (0..shard.n()).map(|i| ys[i] - dot_unchecked(shard.xs().row(i), &fit.beta_hat)).collect();
    let rm = resid.iter().sum::<f64>() / n;
    let s = (resid.iter().map(|r| (r - rm).powi(2)).sum::<f64>() / n).sqrt();
    Ok(if s > 0.0 { s } else { sd })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Task;

    fn scalar_dataset(z: f64) -> Dataset {
        let s = Shard::new(0, Matrix::new(1, 1, vec![1.0]).unwrap(), vec![z], Task::Regression).unwrap();
        Dataset::new(vec![s], Task::Regression).unwrap()
    }

    #[test]
    fn hard_threshold_examples() {
        let v = DenseVector::new(vec![1.0, -0.2, 0.5]).unwrap();
        assert_eq!(hard_threshold(&v, 0.3).as_slice(), &[1.0, 0.0, 0.5]);
        assert_eq!(hard_threshold(&v, 0.0), v);
        let once = hard_threshold(&v, 0.5);
        assert_eq!(hard_threshold(&once, 0.5), once);
        assert!(hard_threshold(&v, f64::INFINITY).iter().all(|x| *x == 0.0));
    }

    #[test]
    fn ista_matches_hand_computation() {
        // loss 0.5 (2 - b)^2, lambda 0.5, step 0.5 from b = 0:
        // b1 = st(0 + 0.5*2, 0.25) = 0.75
        // b2 = st(0.75 + 0.5*1.25, 0.25) = 1.125
        // b3 = st(1.125 + 0.5*0.875, 0.25) = 1.3125
        let ds = scalar_dataset(2.0);
        let tr = prox_gd_distributed(&ds, LossSpec::squared(), 0.5, Some(0.5), 3, &DenseVector::zeros(1), None).unwrap();
        let seq: Vec<f64> = tr.records.iter().map(|r| r.beta[0]).collect();
        assert_eq!(seq, vec![0.0, 0.75, 1.125, 1.3125]);
        assert!(!tr.diverged);
    }

    #[test]
    fn oversized_step_is_flagged_divergent() {
        let ds = scalar_dataset(2.0);
        let tr = prox_gd_distributed(&ds, LossSpec::squared(), 0.01, Some(2.5), 12, &DenseVector::zeros(1), None).unwrap();
        assert!(tr.diverged);
    }

    #[test]
    fn avg_debias_guards() {
        let ds = scalar_dataset(1.0);
        let bad = AvgDebiasConfig { lambda: 0.1, gamma: 0.0, tau: 0.0, force: false };
        assert!(avg_debias(&ds, LossSpec::squared(), &bad, &SolverConfig::default()).is_err());
        let xs = Matrix::zeros(2, AVG_DEBIAS_MAX_P + 1);
        let wide = Dataset::new(vec![Shard::new(0, xs, vec![0.0, 1.0], Task::Regression).unwrap()], Task::Regression).unwrap();
        let cfg = AvgDebiasConfig { lambda: 0.1, gamma: 0.1, tau: 0.0, force: false };
        assert!(matches!(avg_debias(&wide, LossSpec::squared(), &cfg, &SolverConfig::default()), Err(Error::Config(_))));
    }
}
