//! Nodewise-lasso approximate inverse covariance.
//!
//! Row `k` regresses column `k` on the other columns with penalty `gamma`,
//! giving coefficients `g_k` and
//! `tau_k^2 = ||X_k - X_{-k} g_k||^2 / n + gamma ||g_k||_1`. The row is then
//! `1 / tau_k^2` on the diagonal and `-g_k / tau_k^2` elsewhere.

use log::warn;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{dot_unchecked, l1_norm, DenseVector, LossSpec, Matrix, Shard, Task};
use crate::prox_solver::{solve, ShiftedProblem, SolverConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct DebiasModel {
    /// p x p, row k is the k-th nodewise row.
    pub theta: Matrix,
    pub gamma: f64,
    /// Columns with no variance; their rows fall back to the unit vector.
    pub degenerate: Vec<usize>,
}

impl DebiasModel {
    pub fn p(&self) -> usize {
        self.theta.rows()
    }

    /// `Theta v`
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.theta.mul_vec(v)
    }
}

fn drop_column(xs: &Matrix, k: usize) -> Matrix {
    let (n, p) = (xs.rows(), xs.cols());
    let mut data = Vec::with_capacity(n * (p - 1));
    for i in 0..n {
        let r = xs.row(i);
        data.extend_from_slice(&r[..k]);
        data.extend_from_slice(&r[k + 1..]);
    }
    Matrix::new(n, p - 1, data).expect("sized above")
}

/// Fits every nodewise regression on the design `xs` (rows are observations).
pub fn nodewise_theta(xs: &Matrix, gamma: f64, cfg: &SolverConfig) -> Result<DebiasModel> {
    if !(gamma > 0.0) {
        return Err(Error::Config(format!("nodewise penalty must be positive, got {gamma}")));
    }
    let (n, p) = (xs.rows(), xs.cols());
    let rows: Vec<Result<(Vec<f64>, bool)>> = (0..p)
        .into_par_iter()
        .map(|k| {
            let target = xs.column(k);
            let energy = dot_unchecked(&target, &target) / n as f64;
            let mut row = vec![0.0; p];
            if !(energy > 0.0) {
                row[k] = 1.0;
                return Ok((row, true));
            }
            if p == 1 {
                row[0] = 1.0 / energy;
                return Ok((row, false));
            }
            let others = Shard::new(0, drop_column(xs, k), target.clone(), Task::Regression)?;
            let problem = ShiftedProblem::plain(LossSpec::squared(), vec![&others], gamma)?;
            let fit = solve(&problem, &DenseVector::zeros(p - 1), cfg)?;
            let coef = fit.beta_hat;
            let fitted = others.xs().mul_vec(&coef);
            let rss: f64 = target.iter().zip(&fitted).map(|(t, f)| (t - f) * (t - f)).sum();
            let tau2 = rss / n as f64 + gamma * l1_norm(&coef);
            if !(tau2 > 0.0 && tau2.is_finite()) {
                row[k] = 1.0;
                return Ok((row, true));
            }
            let mut c = coef.iter();
            for (j, slot) in row.iter_mut().enumerate() {
                *slot = if j == k { 1.0 / tau2 } else { -c.next().expect("p - 1 coefficients") / tau2 };
            }
            Ok((row, false))
        })
        .collect();
    let mut data = Vec::with_capacity(p * p);
    let mut degenerate = Vec::new();
    for (k, r) in rows.into_iter().enumerate() {
        let (row, flagged) = r?;
        if flagged {
            warn!("nodewise column {k} is degenerate; using the unit row");
            degenerate.push(k);
        }
        data.extend(row);
    }
    Ok(DebiasModel { theta: Matrix::new(p, p, data)?, gamma, degenerate })
}

/// `X^T X / n`
pub fn gram(xs: &Matrix) -> Matrix {
    let (n, p) = (xs.rows(), xs.cols());
    let mut g = Matrix::zeros(p, p);
    for i in 0..n {
        let r = xs.row(i);
        for a in 0..p {
            let ra = r[a];
            if ra == 0.0 {
                continue;
            }
            let row = g.row_mut(a);
            for b in 0..p {
                row[b] += ra * r[b];
            }
        }
    }
    let scale = 1.0 / n as f64;
    let data: Vec<f64> = g.as_slice().iter().map(|v| v * scale).collect();
    Matrix::new(p, p, data).expect("p x p")
}

/// `max_{k,l} |(Theta Sigma_hat - I)_{kl}|` with `Sigma_hat = X^T X / n`.
pub fn precision_residual(xs: &Matrix, model: &DebiasModel) -> f64 {
    let sigma = gram(xs);
    let p = sigma.rows();
    let mut worst = 0.0_f64;
    for k in 0..p {
        let theta_k = model.theta.row(k);
        for l in 0..p {
            // Sigma_hat is symmetric, so column l equals row l
            let v = dot_unchecked(theta_k, sigma.row(l)) - if k == l { 1.0 } else { 0.0 };
            worst = worst.max(v.abs());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orthogonal_design_gives_identity() {
        // columns of a scaled 4x4 Hadamard matrix: X^T X / n = I
        let h = [[1.0, 1.0, 1.0, 1.0], [1.0, -1.0, 1.0, -1.0], [1.0, 1.0, -1.0, -1.0], [1.0, -1.0, -1.0, 1.0]];
        let rows: Vec<Vec<f64>> = h.iter().map(|r| r.to_vec()).collect();
        let xs = Matrix::from_rows(&rows).unwrap();
        let model = nodewise_theta(&xs, 0.1, &SolverConfig::default()).unwrap();
        for k in 0..4 {
            for l in 0..4 {
                let expect = if k == l { 1.0 } else { 0.0 };
                assert!((model.theta.get(k, l) - expect).abs() < 1e-6);
            }
        }
        assert!(precision_residual(&xs, &model) < 1e-6);
    }

    #[test]
    fn zero_column_is_flagged() {
        let xs = Matrix::new(3, 2, vec![1.0, 0.0, -1.0, 0.0, 2.0, 0.0]).unwrap();
        let model = nodewise_theta(&xs, 0.1, &SolverConfig::default()).unwrap();
        assert_eq!(model.degenerate, vec![1]);
        assert_eq!(model.theta.row(1), &[0.0, 1.0]);
        assert!(nodewise_theta(&xs, 0.0, &SolverConfig::default()).is_err());
    }
}
