//! Shared data types: parameter vectors, row-major designs, shards and datasets.
//!
//! Everything here is immutable once built. Shards are handed out behind
//! [`Arc`] so worker threads can read them without copying.

use std::ops::Deref;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A length-`p` vector of finite `f64` values.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseVector {
    values: Vec<f64>,
}

impl DenseVector {
    /// Builds a vector, rejecting NaN and infinite entries.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite entry {} at index {i}", values[i])));
        }
        Ok(Self { values })
    }

    pub fn zeros(p: usize) -> Self {
        Self { values: vec![0.0; p] }
    }

    /// Wraps values the caller has already checked (or produced from finite inputs).
    pub(crate) fn from_vec_unchecked(values: Vec<f64>) -> Self {
        debug_assert!(values.iter().all(|v| v.is_finite()));
        Self { values }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Indices of the nonzero entries, ascending.
    pub fn support(&self) -> Vec<usize> {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn sub(&self, other: &DenseVector) -> Result<DenseVector> {
        check_len(self.len(), other.len())?;
        Ok(Self::from_vec_unchecked(
            self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
        ))
    }
}

impl Deref for DenseVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.values
    }
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::dim(expected, got));
    }
    Ok(())
}

/// Sum of `a_i * b_i`, accumulated strictly left to right.
pub fn dot(a: &[f64], b: &[f64]) -> Result<f64> {
    check_len(a.len(), b.len())?;
    Ok(dot_unchecked(a, b))
}

#[inline]
pub(crate) fn dot_unchecked(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

pub fn linf_norm(a: &[f64]) -> Result<f64> {
    if a.is_empty() {
        return Err(Error::Dimension("max norm of an empty vector".into()));
    }
    Ok(a.iter().fold(0.0_f64, |m, v| m.max(v.abs())))
}

pub fn l1_norm(a: &[f64]) -> f64 {
    a.iter().map(|v| v.abs()).sum()
}

pub fn l2_norm(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Dense row-major matrix; rows are observations.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::Dimension(format!("row {i} has {} columns, expected {cols}", r.len())));
            }
            data.extend_from_slice(r);
        }
        Ok(Self { rows: rows.len(), cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    /// Stacks matrices with equal column counts on top of each other.
    pub fn vstack(parts: &[&Matrix]) -> Result<Matrix> {
        let cols = parts.first().map_or(0, |m| m.cols);
        let mut data = Vec::new();
        let mut rows = 0;
        for m in parts {
            check_len(cols, m.cols)?;
            data.extend_from_slice(&m.data);
            rows += m.rows;
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Selects rows in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix { rows: idx.len(), cols: self.cols, data }
    }

    /// `A v` for a length-`cols` vector.
    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.rows).map(|i| dot_unchecked(self.row(i), v)).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Regression,
    Classification,
}

/// One machine's block of observations.
#[derive(Debug, Clone, PartialEq)]
pub struct Shard {
    machine_id: usize,
    xs: Matrix,
    ys: Vec<f64>,
}

impl Shard {
    pub fn new(machine_id: usize, xs: Matrix, ys: Vec<f64>, task: Task) -> Result<Self> {
        if xs.rows() != ys.len() {
            return Err(Error::Dimension(format!(
                "shard {machine_id}: {} rows but {} responses",
                xs.rows(),
                ys.len()
            )));
        }
        if xs.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::Data(format!("shard {machine_id}: non-finite feature value")));
        }
        if ys.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data(format!("shard {machine_id}: non-finite response")));
        }
        if task == Task::Classification {
            if let Some(i) = ys.iter().position(|&y| y != 1.0 && y != -1.0) {
                return Err(Error::Data(format!(
                    "shard {machine_id}: label {} at row {i} is not -1 or +1",
                    ys[i]
                )));
            }
        }
        Ok(Self { machine_id, xs, ys })
    }

    pub fn machine_id(&self) -> usize {
        self.machine_id
    }

    pub fn xs(&self) -> &Matrix {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    pub fn n(&self) -> usize {
        self.ys.len()
    }

    pub fn p(&self) -> usize {
        self.xs.cols()
    }

    pub fn with_machine_id(&self, machine_id: usize) -> Shard {
        Shard { machine_id, xs: self.xs.clone(), ys: self.ys.clone() }
    }

    /// Concatenates shards (rows in argument order) into one block.
    pub fn concat(machine_id: usize, parts: &[&Shard]) -> Result<Shard> {
        let xs = Matrix::vstack(&parts.iter().map(|s| &s.xs).collect::<Vec<_>>())?;
        let ys = parts.iter().flat_map(|s| s.ys.iter().copied()).collect();
        Ok(Shard { machine_id, xs, ys })
    }

    pub fn select_rows(&self, idx: &[usize]) -> Shard {
        Shard {
            machine_id: self.machine_id,
            xs: self.xs.select_rows(idx),
            ys: idx.iter().map(|&i| self.ys[i]).collect(),
        }
    }
}

/// `m` equally sized shards; shard 0 lives on the master.
#[derive(Debug, Clone)]
pub struct Dataset {
    shards: Vec<Arc<Shard>>,
    p: usize,
    task: Task,
}

impl Dataset {
    pub fn new(shards: Vec<Shard>, task: Task) -> Result<Self> {
        let first = shards
            .first()
            .ok_or_else(|| Error::Data("dataset needs at least one shard".into()))?;
        let (n, p) = (first.n(), first.p());
        for (j, s) in shards.iter().enumerate() {
            if s.machine_id != j {
                return Err(Error::Data(format!(
                    "shard at position {j} has machine_id {}",
                    s.machine_id
                )));
            }
            if s.p() != p {
                return Err(Error::Dimension(format!("shard {j} has p={}, expected {p}", s.p())));
            }
            if s.n() != n {
                return Err(Error::Data(format!("shard {j} has n={}, expected {n}", s.n())));
            }
            if task == Task::Classification {
                if let Some(&y) = s.ys.iter().find(|&&y| y != 1.0 && y != -1.0) {
                    return Err(Error::Data(format!("shard {j}: label {y} is not -1 or +1")));
                }
            }
        }
        Ok(Self { shards: shards.into_iter().map(Arc::new).collect(), p, task })
    }

    pub fn shards(&self) -> &[Arc<Shard>] {
        &self.shards
    }

    pub fn shard(&self, j: usize) -> &Shard {
        &self.shards[j]
    }

    pub fn master(&self) -> &Shard {
        &self.shards[0]
    }

    pub fn m(&self) -> usize {
        self.shards.len()
    }

    pub fn n(&self) -> usize {
        self.shards[0].n()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn shard_refs(&self) -> Vec<&Shard> {
        self.shards.iter().map(|s| s.as_ref()).collect()
    }

    /// Largest `|x_ji|` over every machine and row.
    pub fn max_abs_x(&self) -> f64 {
        self.shards.iter().fold(0.0_f64, |m, s| m.max(s.xs.max_abs()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossFamily {
    Squared,
    Logistic,
}

/// Largest value of `|s(1-s)(1-2s)|` over the logistic function `s`, which
/// bounds the third derivative of the logistic loss.
pub const LOGISTIC_THIRD_DERIV_BOUND: f64 = 0.096_225_044_864_937_63; // 1 / (6 sqrt 3)

/// A loss family together with its smoothness constant `L` and third
/// derivative bound `M`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossSpec {
    family: LossFamily,
    smoothness_l: f64,
    third_deriv_m: f64,
}

impl LossSpec {
    pub fn squared() -> Self {
        Self { family: LossFamily::Squared, smoothness_l: 1.0, third_deriv_m: 0.0 }
    }

    pub fn logistic() -> Self {
        Self::logistic_with_bound(LOGISTIC_THIRD_DERIV_BOUND).expect("positive constant")
    }

    /// Logistic loss with a user-chosen (looser) third-derivative bound.
    pub fn logistic_with_bound(third_deriv_m: f64) -> Result<Self> {
        if !(third_deriv_m.is_finite() && third_deriv_m >= LOGISTIC_THIRD_DERIV_BOUND * (1.0 - 1e-12)) {
            return Err(Error::Config(format!(
                "logistic third-derivative bound must be at least {LOGISTIC_THIRD_DERIV_BOUND}, got {third_deriv_m}"
            )));
        }
        Ok(Self { family: LossFamily::Logistic, smoothness_l: 0.25, third_deriv_m })
    }

    pub fn for_family(family: LossFamily) -> Self {
        match family {
            LossFamily::Squared => Self::squared(),
            LossFamily::Logistic => Self::logistic(),
        }
    }

    /// The natural loss for a task: squared for regression, logistic for classification.
    pub fn for_task(task: Task) -> Self {
        match task {
            Task::Regression => Self::squared(),
            Task::Classification => Self::logistic(),
        }
    }

    pub fn family(&self) -> LossFamily {
        self.family
    }

    pub fn smoothness_l(&self) -> f64 {
        self.smoothness_l
    }

    pub fn third_deriv_m(&self) -> f64 {
        self.third_deriv_m
    }
}

/// The true sparse parameter of a synthetic problem.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    beta_star: DenseVector,
    support: Vec<usize>,
}

impl GroundTruth {
    pub fn new(beta_star: DenseVector) -> Self {
        let support = beta_star.support();
        Self { beta_star, support }
    }

    pub fn beta_star(&self) -> &DenseVector {
        &self.beta_star
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn sparsity(&self) -> usize {
        self.support.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn dot_examples() {
        assert_eq!(dot(&[1.0, 2.0], &[3.0, 4.0]).unwrap(), 11.0);
        assert_eq!(dot(&[0.0, 0.0], &[5.0, 7.0]).unwrap(), 0.0);
        let expected = 1e8 * 1e8 + 1.0 * -1.0;
        assert_eq!(dot(&[1e8, 1.0], &[1e8, -1.0]).unwrap(), expected);
        assert!(matches!(dot(&[1.0], &[1.0, 2.0]), Err(Error::Dimension(_))));
    }

    #[test]
    fn norm_examples() {
        assert_eq!(linf_norm(&[1.0, -3.0, 2.0]).unwrap(), 3.0);
        assert_eq!(linf_norm(&[0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(linf_norm(&[-0.5]).unwrap(), 0.5);
        assert!(linf_norm(&[]).is_err());
        assert_eq!(l1_norm(&[1.0, -2.0, 3.0]), 6.0);
        assert_eq!(l2_norm(&[3.0, 4.0]), 5.0);
        assert_eq!(l1_norm(&[0.0; 4]), 0.0);
        assert_eq!(l2_norm(&[0.0; 4]), 0.0);
    }

    #[test]
    fn dense_vector_rejects_non_finite() {
        assert!(DenseVector::new(vec![1.0, f64::NAN]).is_err());
        assert!(DenseVector::new(vec![f64::INFINITY]).is_err());
        assert_eq!(DenseVector::new(vec![0.0, 2.0, 0.0, -1.0]).unwrap().support(), vec![1, 3]);
    }

    #[test]
    fn shard_and_dataset_invariants() {
        let xs = Matrix::new(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert!(Shard::new(0, xs.clone(), vec![1.0], Task::Regression).is_err());
        assert!(Shard::new(0, xs.clone(), vec![1.0, 0.5], Task::Classification).is_err());
        let a = Shard::new(0, xs.clone(), vec![1.0, -1.0], Task::Classification).unwrap();
        let b = Shard::new(2, xs.clone(), vec![1.0, -1.0], Task::Classification).unwrap();
        assert!(Dataset::new(vec![a.clone(), b], Task::Classification).is_err());
        let short = Shard::new(1, Matrix::new(1, 2, vec![1.0, 1.0]).unwrap(), vec![1.0], Task::Classification)
            .unwrap();
        assert!(Dataset::new(vec![a.clone(), short], Task::Classification).is_err());
        let ds = Dataset::new(vec![a.clone(), a.with_machine_id(1)], Task::Classification).unwrap();
        assert_eq!((ds.m(), ds.n(), ds.p()), (2, 2, 2));
    }

    #[test]
    fn ground_truth_support_matches_nonzeros() {
        let t = GroundTruth::new(DenseVector::new(vec![0.3, 0.0, 0.9, 0.0]).unwrap());
        assert_eq!(t.support(), &[0, 2]);
        assert_eq!(t.sparsity(), 2);
    }

    #[test]
    fn logistic_bound_is_tight_maximum() {
        // grid search over the logistic value s in (0, 1)
        let mut best = 0.0_f64;
        let steps = 2_000_000;
        for k in 1..steps {
            let s = k as f64 / steps as f64;
            best = best.max((s * (1.0 - s) * (1.0 - 2.0 * s)).abs());
        }
        assert!((best - LOGISTIC_THIRD_DERIV_BOUND).abs() < 1e-10, "{best}");
        assert!((LOGISTIC_THIRD_DERIV_BOUND - 1.0 / (6.0 * 3f64.sqrt())).abs() < 1e-16);
        assert!(LossSpec::logistic_with_bound(0.01).is_err());
        assert_eq!(LossSpec::logistic_with_bound(0.5).unwrap().third_deriv_m(), 0.5);
    }

    fn naive_dot(a: &[f64], b: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in 0..a.len() {
            s += a[i] * b[i];
        }
        s
    }

    proptest! {
        #[test]
        fn norms_agree_with_naive(v in prop::collection::vec(-1e3f64..1e3, 1..64),
                                  w in prop::collection::vec(-1e3f64..1e3, 64)) {
            let w = &w[..v.len()];
            let scale = v.iter().map(|x| x.abs()).sum::<f64>().max(1.0);
            prop_assert!((dot(&v, w).unwrap() - naive_dot(&v, w)).abs() <= 1e-12 * scale * 1e3);
            let l1: f64 = v.iter().fold(0.0, |s, x| s + x.abs());
            prop_assert!((l1_norm(&v) - l1).abs() <= 1e-12 * l1.max(1.0));
            let l2 = v.iter().fold(0.0, |s, x| s + x * x).sqrt();
            prop_assert!((l2_norm(&v) - l2).abs() <= 1e-12 * l2.max(1.0));
            let li = v.iter().map(|x| x.abs()).fold(f64::MIN, f64::max);
            prop_assert_eq!(linf_norm(&v).unwrap(), li);
        }
    }
}
