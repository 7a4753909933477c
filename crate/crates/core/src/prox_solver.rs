//! Solver for the shifted l1 problem
//!
//! ```text
//! minimize  L(beta) + <shift, beta> + lambda * ||beta||_1
//! ```
//!
//! where `L` is the empirical loss over one or more shards pooled together.
//! A zero shift gives the plain lasso / l1-logistic fit, and pooling every
//! shard gives the centralized fit.
//!
//! The iteration is monotone FISTA with function-value restarts and a
//! backtracking estimate of the Lipschitz constant. Convergence is certified
//! by the l-infinity KKT residual.

use crate::error::{Error, Result};
use crate::loss::{hessian_norm_estimate, pooled_eval, pooled_value};
use crate::model::{dot_unchecked, l1_norm, DenseVector, LossSpec, Shard};

/// `sign(z) * max(|z| - t, 0)`; exactly zero when `|z| <= t`.
#[inline]
pub fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Stop once the KKT residual falls to this level.
    pub tol: f64,
    pub max_iter: usize,
    /// Step multiplier applied on each failed sufficient-decrease check.
    pub shrink: f64,
    /// Power iterations used for the initial step size.
    pub power_iters: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 10_000, shrink: 0.5, power_iters: 5 }
    }
}

impl SolverConfig {
    pub fn with_tol(tol: f64) -> Self {
        Self { tol, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || self.max_iter == 0 || !(self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(Error::Config(format!("invalid solver configuration {self:?}")));
        }
        Ok(())
    }
}

/// The objective `L(beta) + <shift, beta> + lambda ||beta||_1` over pooled shards.
#[derive(Debug, Clone)]
pub struct ShiftedProblem<'a> {
    spec: LossSpec,
    shards: Vec<&'a Shard>,
    shift: DenseVector,
    lambda: f64,
}

impl<'a> ShiftedProblem<'a> {
    pub fn new(spec: LossSpec, shards: Vec<&'a Shard>, shift: DenseVector, lambda: f64) -> Result<Self> {
        let p = shards
            .first()
            .ok_or_else(|| Error::Data("shifted problem needs at least one shard".into()))?
            .p();
        if let Some(s) = shards.iter().find(|s| s.p() != p) {
            return Err(Error::dim(p, s.p()));
        }
        if shift.len() != p {
            return Err(Error::dim(p, shift.len()));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be finite and nonnegative, got {lambda}")));
        }
        Ok(Self { spec, shards, shift, lambda })
    }

    /// Zero-shift problem: the ordinary l1-regularized fit.
    pub fn plain(spec: LossSpec, shards: Vec<&'a Shard>, lambda: f64) -> Result<Self> {
        let p = shards.first().map_or(0, |s| s.p());
        Self::new(spec, shards, DenseVector::zeros(p), lambda)
    }

    pub fn p(&self) -> usize {
        self.shift.len()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn shift(&self) -> &DenseVector {
        &self.shift
    }

    pub fn spec(&self) -> &LossSpec {
        &self.spec
    }

    /// Smooth part `L(beta) + <shift, beta>` and its gradient.
    fn smooth_eval(&self, beta: &[f64]) -> (f64, Vec<f64>) {
        let e = pooled_eval(&self.spec, &self.shards, beta);
        let mut g = e.gradient.into_vec();
        for (gi, si) in g.iter_mut().zip(self.shift.iter()) {
            *gi += si;
        }
        (e.value + dot_unchecked(&self.shift, beta), g)
    }

    fn check(&self, beta: &[f64]) -> Result<()> {
        if beta.len() != self.p() {
            return Err(Error::dim(self.p(), beta.len()));
        }
        Ok(())
    }

    /// Composite objective value.
    pub fn objective(&self, beta: &[f64]) -> Result<f64> {
        self.check(beta)?;
        Ok(pooled_value(&self.spec, &self.shards, beta)
            + dot_unchecked(&self.shift, beta)
            + self.lambda * l1_norm(beta))
    }

    /// Gradient of the smooth part, `grad L(beta) + shift`.
    pub fn smooth_gradient(&self, beta: &[f64]) -> Result<DenseVector> {
        self.check(beta)?;
        Ok(DenseVector::from_vec_unchecked(self.smooth_eval(beta).1))
    }

    pub fn kkt_residual(&self, beta: &[f64]) -> Result<f64> {
        self.check(beta)?;
        Ok(kkt_from_gradient(&self.smooth_eval(beta).1, beta, self.lambda))
    }
}

/// l-infinity violation of `0 in g + lambda * d||beta||_1`.
pub fn kkt_from_gradient(grad: &[f64], beta: &[f64], lambda: f64) -> f64 {
    grad.iter().zip(beta).fold(0.0_f64, |worst, (&g, &b)| {
        let v = if b > 0.0 {
            (g + lambda).abs()
        } else if b < 0.0 {
            (g - lambda).abs()
        } else {
            (g.abs() - lambda).max(0.0)
        };
        worst.max(v)
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverReport {
    pub beta_hat: DenseVector,
    pub iterations: usize,
    pub kkt_residual: f64,
    pub objective: f64,
    pub converged: bool,
}

struct Point {
    beta: Vec<f64>,
    smooth: f64,
    grad: Vec<f64>,
    composite: f64,
}

impl Point {
    fn at(problem: &ShiftedProblem<'_>, beta: Vec<f64>) -> Point {
        let (smooth, grad) = problem.smooth_eval(&beta);
        let composite = smooth + problem.lambda * l1_norm(&beta);
        Point { beta, smooth, grad, composite }
    }

    fn kkt(&self, lambda: f64) -> f64 {
        kkt_from_gradient(&self.grad, &self.beta, lambda)
    }
}

fn numeric_failure(msg: &str, last: &[f64]) -> Error {
    Error::Numeric {
        msg: msg.to_string(),
        last_finite: DenseVector::new(last.to_vec()).ok(),
    }
}

/// Solves `problem` starting from `init`.
pub fn solve(problem: &ShiftedProblem<'_>, init: &DenseVector, cfg: &SolverConfig) -> Result<SolverReport> {
    cfg.validate()?;
    problem.check(init)?;
    let lambda = problem.lambda;

    let mut x = Point::at(problem, init.to_vec());
    if !x.composite.is_finite() {
        return Err(numeric_failure("objective is not finite at the initial point", &vec![0.0; init.len()]));
    }
    let mut best_beta = x.beta.clone();
    let mut best_kkt = x.kkt(lambda);
    let mut best_obj = x.composite;
    if best_kkt <= cfg.tol {
        return Ok(SolverReport {
            beta_hat: DenseVector::from_vec_unchecked(best_beta),
            iterations: 0,
            kkt_residual: best_kkt,
            objective: best_obj,
            converged: true,
        });
    }

    let mut lip = hessian_norm_estimate(&problem.spec, &problem.shards, init, cfg.power_iters);
    if !(lip.is_finite() && lip > 0.0) {
        lip = 1.0;
    }

    let mut y = Point { beta: x.beta.clone(), smooth: x.smooth, grad: x.grad.clone(), composite: x.composite };
    let mut theta = 1.0_f64;
    // y coincides with x: the step below is then a plain proximal gradient
    // step, a descent step in exact arithmetic, so roundoff can't reject it
    let mut at_x = true;
    let mut iterations = 0;

    while iterations < cfg.max_iter {
        iterations += 1;

        // backtracking on the quadratic upper model around y
        let z = loop {
            let step = 1.0 / lip;
            let cand: Vec<f64> = y
                .beta
                .iter()
                .zip(&y.grad)
                .map(|(b, g)| soft_threshold(b - step * g, step * lambda))
                .collect();
            let z = Point::at(problem, cand);
            if !z.smooth.is_finite() {
                if lip > 1e300 {
                    return Err(numeric_failure("objective diverged", &x.beta));
                }
                lip /= cfg.shrink;
                continue;
            }
            let mut lin = 0.0;
            let mut sq = 0.0;
            for ((zi, yi), gi) in z.beta.iter().zip(&y.beta).zip(&y.grad) {
                let d = zi - yi;
                lin += gi * d;
                sq += d * d;
            }
            let model = y.smooth + lin + 0.5 * lip * sq;
            let slack = 1e-13 * y.smooth.abs().max(1.0);
            if z.smooth <= model + slack || sq == 0.0 {
                break z;
            }
            lip /= cfg.shrink;
            if !lip.is_finite() {
                return Err(numeric_failure("step size underflow", &x.beta));
            }
        };

        let theta_next = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
        if z.composite <= x.composite || at_x {
            let x_prev = std::mem::replace(&mut x, z);
            let momentum = (theta - 1.0) / theta_next;
            let ybeta: Vec<f64> = x
                .beta
                .iter()
                .zip(&x_prev.beta)
                .map(|(a, b)| a + momentum * (a - b))
                .collect();
            y = Point::at(problem, ybeta);
            theta = theta_next;
            at_x = momentum == 0.0;
            if !y.smooth.is_finite() {
                y = Point { beta: x.beta.clone(), smooth: x.smooth, grad: x.grad.clone(), composite: x.composite };
                theta = 1.0;
                at_x = true;
            }
        } else {
            // the step from y went uphill: restart the momentum at x
            y = Point { beta: x.beta.clone(), smooth: x.smooth, grad: x.grad.clone(), composite: x.composite };
            theta = 1.0;
            at_x = true;
        }

        let k = x.kkt(lambda);
        if k < best_kkt {
            best_kkt = k;
            best_beta.clone_from(&x.beta);
            best_obj = x.composite;
        }
        if best_kkt <= cfg.tol {
            break;
        }
    }

    Ok(SolverReport {
        beta_hat: DenseVector::from_vec_unchecked(best_beta),
        iterations,
        kkt_residual: best_kkt,
        objective: best_obj,
        converged: best_kkt <= cfg.tol,
    })
}
