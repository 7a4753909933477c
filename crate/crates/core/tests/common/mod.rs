//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use edsl::{Matrix, Shard, Task};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_matrix(rng: &mut ChaCha8Rng, n: usize, p: usize) -> Matrix {
    let data: Vec<f64> = (0..n * p).map(|_| rng.sample(StandardNormal)).collect();
    Matrix::new(n, p, data).unwrap()
}

/// Sparse linear model shard: first `s` coefficients in [0.5, 1.5], unit noise scaled by `noise`.
pub fn regression_shard(rng: &mut ChaCha8Rng, id: usize, n: usize, p: usize, s: usize, noise: f64) -> (Shard, Vec<f64>) {
    let beta: Vec<f64> = (0..p).map(|k| if k < s { 0.5 + (k % 3) as f64 * 0.5 } else { 0.0 }).collect();
    let xs = gaussian_matrix(rng, n, p);
    let ys = (0..n)
        .map(|i| {
            let u: f64 = xs.row(i).iter().zip(&beta).map(|(a, b)| a * b).sum();
            u + noise * rng.sample::<f64, _>(StandardNormal)
        })
        .collect();
    (Shard::new(id, xs, ys, Task::Regression).unwrap(), beta)
}

pub fn classification_shard(rng: &mut ChaCha8Rng, id: usize, n: usize, p: usize) -> Shard {
    let xs = gaussian_matrix(rng, n, p);
    let ys = (0..n)
        .map(|i| {
            let u = xs.row(i)[0] - 0.5 * xs.row(i)[1 % p];
            if rng.random::<f64>() < 1.0 / (1.0 + (-u).exp()) {
                1.0
            } else {
                -1.0
            }
        })
        .collect();
    Shard::new(id, xs, ys, Task::Classification).unwrap()
}

pub fn soft(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// `(1/2n)||y - X b||^2 + lambda ||b||_1`, summed naively.
pub fn lasso_objective(xs: &Matrix, ys: &[f64], beta: &[f64], lambda: f64) -> f64 {
    let n = xs.rows();
    let mut rss = 0.0;
    for i in 0..n {
        let mut u = 0.0;
        for j in 0..xs.cols() {
            u += xs.get(i, j) * beta[j];
        }
        rss += (ys[i] - u).powi(2);
    }
    rss / (2.0 * n as f64) + lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
}

/// Cyclic coordinate descent for the lasso, run until no coordinate moves
/// more than `tol` in a sweep.
pub fn coordinate_descent_lasso(xs: &Matrix, ys: &[f64], lambda: f64, tol: f64, max_sweeps: usize) -> Vec<f64> {
    let (n, p) = (xs.rows(), xs.cols());
    let nf = n as f64;
    let col_sq: Vec<f64> = (0..p).map(|j| (0..n).map(|i| xs.get(i, j).powi(2)).sum::<f64>() / nf).collect();
    let mut beta = vec![0.0; p];
    let mut resid = ys.to_vec();
    for _ in 0..max_sweeps {
        let mut moved = 0.0_f64;
        for j in 0..p {
            if col_sq[j] == 0.0 {
                continue;
            }
            let rho: f64 = (0..n).map(|i| xs.get(i, j) * resid[i]).sum::<f64>() / nf + col_sq[j] * beta[j];
            let new = soft(rho, lambda) / col_sq[j];
            let d = new - beta[j];
            if d != 0.0 {
                for i in 0..n {
                    resid[i] -= xs.get(i, j) * d;
                }
                beta[j] = new;
            }
            moved = moved.max(d.abs());
        }
        if moved <= tol {
            break;
        }
    }
    beta
}

pub fn to_dmatrix(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

/// Squared-loss gradient `X^T (X b - y) / n`, computed with nalgebra.
pub fn squared_gradient(shard: &Shard, beta: &[f64]) -> DVector<f64> {
    let x = to_dmatrix(shard.xs());
    let y = DVector::from_column_slice(shard.ys());
    let b = DVector::from_column_slice(beta);
    x.transpose() * (&x * b - y) / shard.n() as f64
}

/// `H^{-1} g` with `H = X^T X / n` by LU.
pub fn hessian_solve(shard: &Shard, g: &DVector<f64>) -> DVector<f64> {
    let x = to_dmatrix(shard.xs());
    let h = x.transpose() * &x / shard.n() as f64;
    h.lu().solve(g).expect("local Hessian is invertible")
}

pub fn linf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let k = s.len();
    if k % 2 == 1 {
        s[k / 2]
    } else {
        0.5 * (s[k / 2 - 1] + s[k / 2])
    }
}
