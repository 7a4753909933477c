//! Empirical losses `L_j(beta) = (1/n) sum_i l(y_i, <x_i, beta>)` for the
//! squared and logistic families.

use crate::error::{Error, Result};
use crate::model::{dot_unchecked, DenseVector, LossFamily, LossSpec, Shard};

/// Loss value together with its gradient at the same point.
#[derive(Debug, Clone, PartialEq)]
pub struct LossEval {
    pub value: f64,
    pub gradient: DenseVector,
}

/// `log(1 + exp(z))` without overflow.
#[inline]
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Logistic function `1 / (1 + exp(-z))`, evaluated on the stable branch.
#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Per-observation loss `l(y, u)`.
#[inline]
pub fn pointwise(family: LossFamily, y: f64, u: f64) -> f64 {
    match family {
        LossFamily::Squared => 0.5 * (y - u) * (y - u),
        LossFamily::Logistic => softplus(-y * u),
    }
}

/// Derivative of `l(y, u)` in `u`.
#[inline]
pub fn pointwise_deriv(family: LossFamily, y: f64, u: f64) -> f64 {
    match family {
        LossFamily::Squared => u - y,
        // -y / (1 + exp(y u))
        LossFamily::Logistic => -y * sigmoid(-y * u),
    }
}

/// Second derivative of `l(y, u)` in `u`.
#[inline]
pub fn pointwise_curvature(family: LossFamily, u: f64) -> f64 {
    match family {
        LossFamily::Squared => 1.0,
        LossFamily::Logistic => {
            let s = sigmoid(u);
            s * (1.0 - s)
        }
    }
}

fn check_dim(shard: &Shard, beta: &[f64]) -> Result<()> {
    if shard.p() != beta.len() {
        return Err(Error::dim(shard.p(), beta.len()));
    }
    Ok(())
}

pub fn loss_value(spec: &LossSpec, shard: &Shard, beta: &[f64]) -> Result<f64> {
    check_dim(shard, beta)?;
    Ok(pooled_value(spec, &[shard], beta))
}

pub fn loss_gradient(spec: &LossSpec, shard: &Shard, beta: &[f64]) -> Result<DenseVector> {
    check_dim(shard, beta)?;
    Ok(pooled_eval(spec, &[shard], beta).gradient)
}

pub fn loss_eval(spec: &LossSpec, shard: &Shard, beta: &[f64]) -> Result<LossEval> {
    check_dim(shard, beta)?;
    Ok(pooled_eval(spec, &[shard], beta))
}

/// Mean of the per-shard gradients, summed in ascending machine order.
pub fn average_gradient(spec: &LossSpec, shards: &[&Shard], beta: &[f64]) -> Result<DenseVector> {
    if shards.is_empty() {
        return Err(Error::Data("average gradient over zero shards".into()));
    }
    let mut ordered: Vec<&Shard> = shards.to_vec();
    ordered.sort_by_key(|s| s.machine_id());
    let mut grads = Vec::with_capacity(ordered.len());
    for s in ordered {
        grads.push(loss_gradient(spec, s, beta)?);
    }
    Ok(mean_in_order(&grads))
}

/// Coordinatewise mean of equal-length vectors, folded left to right.
pub(crate) fn mean_in_order(vs: &[DenseVector]) -> DenseVector {
    let p = vs[0].len();
    let mut acc = vec![0.0; p];
    for v in vs {
        for (a, x) in acc.iter_mut().zip(v.iter()) {
            *a += x;
        }
    }
    let m = vs.len() as f64;
    for a in &mut acc {
        *a /= m;
    }
    DenseVector::from_vec_unchecked(acc)
}

/// Loss over the rows of several shards treated as one sample, rows visited
/// in argument order.
pub(crate) fn pooled_value(spec: &LossSpec, shards: &[&Shard], beta: &[f64]) -> f64 {
    let family = spec.family();
    let mut total = 0.0;
    let mut count = 0usize;
    for s in shards {
        let xs = s.xs();
        for (i, &y) in s.ys().iter().enumerate() {
            total += pointwise(family, y, dot_unchecked(xs.row(i), beta));
        }
        count += s.n();
    }
    total / count as f64
}

/// Value and gradient in a single pass over the pooled rows.
pub(crate) fn pooled_eval(spec: &LossSpec, shards: &[&Shard], beta: &[f64]) -> LossEval {
    let family = spec.family();
    let p = beta.len();
    let mut grad = vec![0.0; p];
    let mut total = 0.0;
    let mut count = 0usize;
    for s in shards {
        let xs = s.xs();
        for (i, &y) in s.ys().iter().enumerate() {
            let row = xs.row(i);
            let u = dot_unchecked(row, beta);
            total += pointwise(family, y, u);
            let d = pointwise_deriv(family, y, u);
            if d != 0.0 {
                for (g, x) in grad.iter_mut().zip(row) {
                    *g += d * x;
                }
            }
        }
        count += s.n();
    }
    let inv = 1.0 / count as f64;
    for g in &mut grad {
        *g *= inv;
    }
    LossEval { value: total * inv, gradient: DenseVector::from_vec_unchecked(grad) }
}

/// Power iteration for the largest eigenvalue of the pooled Hessian
/// `(1/N) X^T W X` at `beta`.
pub(crate) fn hessian_norm_estimate(spec: &LossSpec, shards: &[&Shard], beta: &[f64], iters: usize) -> f64 {
    let family = spec.family();
    let p = beta.len();
    let mut weights: Vec<Vec<f64>> = Vec::with_capacity(shards.len());
    let mut count = 0usize;
    for s in shards {
        let w = (0..s.n())
            .map(|i| pointwise_curvature(family, dot_unchecked(s.xs().row(i), beta)))
            .collect();
        weights.push(w);
        count += s.n();
    }
    if p == 0 || count == 0 {
        return 0.0;
    }
    // deterministic start vector with all-positive entries
    let mut v: Vec<f64> = (0..p).map(|k| 1.0 + (k % 7) as f64 * 0.1).collect();
    let mut est = 0.0;
    for _ in 0..iters.max(1) {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        let mut hv = vec![0.0; p];
        for (s, w) in shards.iter().zip(&weights) {
            for i in 0..s.n() {
                let row = s.xs().row(i);
                let c = w[i] * dot_unchecked(row, &v);
                for (h, x) in hv.iter_mut().zip(row) {
                    *h += c * x;
                }
            }
        }
        hv.iter_mut().for_each(|h| *h /= count as f64);
        est = dot_unchecked(&hv, &v);
        v = hv;
    }
    est
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Matrix, Task};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn one_row(y: f64, task: Task) -> Shard {
        Shard::new(0, Matrix::new(1, 2, vec![1.0, 0.0]).unwrap(), vec![y], task).unwrap()
    }

    fn random_shard(rng: &mut ChaCha8Rng, id: usize, n: usize, p: usize, task: Task) -> Shard {
        let xs: Vec<f64> = (0..n * p).map(|_| rng.random_range(-1.0..1.0)).collect();
        let ys: Vec<f64> = (0..n)
            .map(|_| match task {
                Task::Regression => rng.random_range(-2.0..2.0),
                Task::Classification => {
                    if rng.random_bool(0.5) {
                        1.0
                    } else {
                        -1.0
                    }
                }
            })
            .collect();
        Shard::new(id, Matrix::new(n, p, xs).unwrap(), ys, task).unwrap()
    }

    #[test]
    fn value_examples() {
        let sq = LossSpec::squared();
        let lg = LossSpec::logistic();
        assert_eq!(loss_value(&sq, &one_row(2.0, Task::Regression), &[0.0, 0.0]).unwrap(), 2.0);
        let v = loss_value(&lg, &one_row(1.0, Task::Classification), &[0.0, 0.0]).unwrap();
        assert!((v - std::f64::consts::LN_2).abs() < 1e-15);
        // perfect fit
        let xs = Matrix::new(2, 2, vec![1.0, 2.0, -1.0, 0.5]).unwrap();
        let beta = [0.3, -0.7];
        let ys = xs.mul_vec(&beta);
        let s = Shard::new(0, xs, ys, Task::Regression).unwrap();
        assert_eq!(loss_value(&sq, &s, &beta).unwrap(), 0.0);
    }

    #[test]
    fn gradient_examples() {
        let g = loss_gradient(&LossSpec::squared(), &one_row(2.0, Task::Regression), &[0.0, 0.0]).unwrap();
        assert_eq!(g.as_slice(), &[-2.0, 0.0]);
        let g = loss_gradient(&LossSpec::logistic(), &one_row(1.0, Task::Classification), &[0.0, 0.0]).unwrap();
        assert_eq!(g.as_slice(), &[-0.5, 0.0]);
        assert!(loss_gradient(&LossSpec::squared(), &one_row(2.0, Task::Regression), &[0.0]).is_err());
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for (spec, task) in [(LossSpec::squared(), Task::Regression), (LossSpec::logistic(), Task::Classification)] {
            for _ in 0..20 {
                let s = random_shard(&mut rng, 0, 15, 10, task);
                let beta: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
                let g = loss_gradient(&spec, &s, &beta).unwrap();
                let h = 1e-5;
                let fd: Vec<f64> = (0..10)
                    .map(|k| {
                        let mut bp = beta.clone();
                        let mut bm = beta.clone();
                        bp[k] += h;
                        bm[k] -= h;
                        (loss_value(&spec, &s, &bp).unwrap() - loss_value(&spec, &s, &bm).unwrap()) / (2.0 * h)
                    })
                    .collect();
                let diff: f64 = g.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                let scale = fd.iter().map(|v| v * v).sum::<f64>().sqrt();
                assert!(diff <= 1e-6 * scale, "{diff} vs {scale}");
            }
        }
    }

    #[test]
    fn average_gradient_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let spec = LossSpec::squared();
        let a = random_shard(&mut rng, 0, 12, 5, Task::Regression);
        let beta: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        assert_eq!(average_gradient(&spec, &[&a], &beta).unwrap(), loss_gradient(&spec, &a, &beta).unwrap());
        assert!(average_gradient(&spec, &[], &beta).is_err());

        // at beta = 0 the squared gradient is -X^T y / n, so negating y negates it
        let neg = Shard::new(1, a.xs().clone(), a.ys().iter().map(|y| -y).collect(), Task::Regression).unwrap();
        let z = average_gradient(&spec, &[&a, &neg], &[0.0; 5]).unwrap();
        assert!(z.iter().all(|v| *v == 0.0));

        let b = random_shard(&mut rng, 1, 12, 5, Task::Regression);
        let c = random_shard(&mut rng, 2, 12, 5, Task::Regression);
        let avg = average_gradient(&spec, &[&c, &a, &b], &beta).unwrap();
        let pooled = Shard::concat(0, &[&a, &b, &c]).unwrap();
        let direct = loss_gradient(&spec, &pooled, &beta).unwrap();
        for (x, y) in avg.iter().zip(direct.iter()) {
            assert!((x - y).abs() <= 1e-12 * y.abs().max(1.0));
        }
    }

    #[test]
    fn logistic_gradient_finite_far_out() {
        let s = Shard::new(0, Matrix::new(2, 1, vec![1.0, -1.0]).unwrap(), vec![1.0, 1.0], Task::Classification)
            .unwrap();
        for b in [-1e4, -700.0, 700.0, 1e4] {
            let e = loss_eval(&LossSpec::logistic(), &s, &[b]).unwrap();
            assert!(e.value.is_finite() && e.gradient.is_finite(), "{b}");
        }
    }

    #[test]
    fn hessian_estimate_on_identity_design() {
        let xs = Matrix::new(2, 2, vec![2f64.sqrt(), 0.0, 0.0, 1.0]).unwrap();
        let s = Shard::new(0, xs, vec![0.0, 0.0], Task::Regression).unwrap();
        let est = hessian_norm_estimate(&LossSpec::squared(), &[&s], &[0.0, 0.0], 50);
        assert!((est - 1.0).abs() < 1e-9, "{est}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn loss_is_convex_along_segments(seed in 0u64..10_000, t in 0.01f64..0.99, logistic in any::<bool>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (spec, task) = if logistic {
                (LossSpec::logistic(), Task::Classification)
            } else {
                (LossSpec::squared(), Task::Regression)
            };
            let s = random_shard(&mut rng, 0, 8, 4, task);
            let b1: Vec<f64> = (0..4).map(|_| rng.random_range(-3.0..3.0)).collect();
            let b2: Vec<f64> = (0..4).map(|_| rng.random_range(-3.0..3.0)).collect();
            let mid: Vec<f64> = b1.iter().zip(&b2).map(|(a, b)| t * a + (1.0 - t) * b).collect();
            let lhs = loss_value(&spec, &s, &mid).unwrap();
            let rhs = t * loss_value(&spec, &s, &b1).unwrap() + (1.0 - t) * loss_value(&spec, &s, &b2).unwrap();
            prop_assert!(lhs <= rhs + 1e-12);
        }
    }

    #[test]
    fn derivative_is_l_lipschitz() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for spec in [LossSpec::squared(), LossSpec::logistic()] {
            for _ in 0..10_000 {
                let a = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                let b = rng.random_range(-20.0..20.0);
                let c = rng.random_range(-20.0..20.0);
                let d = (pointwise_deriv(spec.family(), a, b) - pointwise_deriv(spec.family(), a, c)).abs();
                assert!(d <= spec.smoothness_l() * (b - c).abs() * (1.0 + 1e-12) + 1e-15);
            }
        }
    }
}
