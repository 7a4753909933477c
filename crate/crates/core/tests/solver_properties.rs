mod common;

use common::*;
use edsl::loss::loss_gradient;
use edsl::prox_solver::{solve, ShiftedProblem, SolverConfig};
use edsl::{DenseVector, LossSpec, Matrix, Shard, Task};
use proptest::prelude::*;

fn permuted(shard: &Shard, perm: &[usize]) -> Shard {
    let rows: Vec<Vec<f64>> = (0..shard.n()).map(|i| perm.iter().map(|&j| shard.xs().get(i, j)).collect()).collect();
    Shard::new(0, Matrix::from_rows(&rows).unwrap(), shard.ys().to_vec(), Task::Regression).unwrap()
}

fn lambda_max(shard: &Shard) -> f64 {
    let g = loss_gradient(&LossSpec::squared(), shard, &vec![0.0; shard.p()]).unwrap();
    g.iter().fold(0.0, |a, v| a.max(v.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn column_permutation_commutes(seed in 0u64..10_000, frac in 0.05f64..0.6) {
        let mut r = rng(seed);
        let (shard, _) = regression_shard(&mut r, 0, 40, 12, 3, 0.5);
        let perm: Vec<usize> = (0..12).rev().collect();
        let other = permuted(&shard, &perm);
        let lambda = frac * lambda_max(&shard);
        let cfg = SolverConfig::with_tol(1e-11);
        let a = solve(&ShiftedProblem::plain(LossSpec::squared(), vec![&shard], lambda).unwrap(), &DenseVector::zeros(12), &cfg).unwrap();
        let b = solve(&ShiftedProblem::plain(LossSpec::squared(), vec![&other], lambda).unwrap(), &DenseVector::zeros(12), &cfg).unwrap();
        let back: Vec<f64> = (0..12).map(|k| b.beta_hat[perm.iter().position(|&j| j == k).unwrap()]).collect();
        prop_assert!(linf(&a.beta_hat, &back) <= 1e-10);
    }

    #[test]
    fn above_lambda_max_gives_zero(seed in 0u64..10_000, scale in 1.0f64..5.0) {
        let mut r = rng(seed);
        let (shard, _) = regression_shard(&mut r, 0, 30, 15, 3, 1.0);
        let lambda = scale * lambda_max(&shard) * (1.0 + 1e-9);
        let init = DenseVector::new((0..15).map(|k| k as f64 * 0.1).collect()).unwrap();
        let fit = solve(&ShiftedProblem::plain(LossSpec::squared(), vec![&shard], lambda).unwrap(), &init, &SolverConfig::default()).unwrap();
        prop_assert!(fit.beta_hat.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn warm_start_reaches_same_optimum(seed in 0u64..10_000, frac in 0.1f64..0.5) {
        let mut r = rng(seed);
        let (shard, truth) = regression_shard(&mut r, 0, 50, 20, 4, 0.5);
        let lambda = frac * lambda_max(&shard);
        let problem = ShiftedProblem::plain(LossSpec::squared(), vec![&shard], lambda).unwrap();
        let cfg = SolverConfig::with_tol(1e-11);
        let cold = solve(&problem, &DenseVector::zeros(20), &cfg).unwrap();
        let warm = solve(&problem, &DenseVector::new(truth).unwrap(), &cfg).unwrap();
        prop_assert!((cold.objective - warm.objective).abs() <= 1e-10);
        prop_assert!(warm.kkt_residual <= 1e-10 && cold.kkt_residual <= 1e-10);
    }

    #[test]
    fn logistic_solutions_satisfy_kkt(seed in 0u64..10_000, lambda in 0.01f64..0.2) {
        let mut r = rng(seed);
        let shard = classification_shard(&mut r, 0, 60, 10);
        let problem = ShiftedProblem::plain(LossSpec::logistic(), vec![&shard], lambda).unwrap();
        let fit = solve(&problem, &DenseVector::zeros(10), &SolverConfig::default()).unwrap();
        prop_assert!(fit.converged);
        prop_assert!(problem.kkt_residual(&fit.beta_hat).unwrap() <= 1e-8);
    }
}

#[test]
fn shifted_solution_kkt_uses_shift() {
    let mut r = rng(7);
    let (shard, _) = regression_shard(&mut r, 0, 40, 10, 2, 1.0);
    let shift = DenseVector::new((0..10).map(|k| 0.05 * (k as f64 - 5.0)).collect()).unwrap();
    let problem = ShiftedProblem::new(LossSpec::squared(), vec![&shard], shift.clone(), 0.1).unwrap();
    let fit = solve(&problem, &DenseVector::zeros(10), &SolverConfig::default()).unwrap();
    let g = loss_gradient(&LossSpec::squared(), &shard, &fit.beta_hat).unwrap();
    for k in 0..10 {
        let total = g[k] + shift[k];
        if fit.beta_hat[k] != 0.0 {
            assert!((total + 0.1 * fit.beta_hat[k].signum()).abs() <= 1e-8);
        } else {
            assert!(total.abs() <= 0.1 + 1e-8);
        }
    }
}

#[test]
fn rejects_bad_inputs() {
    let mut r = rng(1);
    let (shard, _) = regression_shard(&mut r, 0, 10, 4, 1, 1.0);
    assert!(ShiftedProblem::plain(LossSpec::squared(), vec![&shard], -1.0).is_err());
    assert!(ShiftedProblem::plain(LossSpec::squared(), vec![&shard], f64::NAN).is_err());
    let problem = ShiftedProblem::plain(LossSpec::squared(), vec![&shard], 0.1).unwrap();
    assert!(solve(&problem, &DenseVector::zeros(5), &SolverConfig::default()).is_err());
    assert!(solve(&problem, &DenseVector::zeros(4), &SolverConfig { tol: 0.0, ..SolverConfig::default() }).is_err());
}
