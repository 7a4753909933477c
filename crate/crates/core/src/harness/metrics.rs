use crate::error::{Error, Result};
use crate::model::{dot_unchecked, l1_norm, l2_norm, Shard, Task};

/// `(||beta_hat - beta*||_1, ||beta_hat - beta*||_2)`
pub fn estimation_errors(beta_hat: &[f64], truth: &[f64]) -> Result<(f64, f64)> {
    if beta_hat.len() != truth.len() {
        return Err(Error::dim(truth.len(), beta_hat.len()));
    }
    let d: Vec<f64> = beta_hat.iter().zip(truth).map(|(a, b)| a - b).collect();
    Ok((l1_norm(&d), l2_norm(&d)))
}

fn check_pair(pred: &[f64], truth: &[f64]) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(Error::dim(truth.len(), pred.len()));
    }
    if truth.is_empty() {
        return Err(Error::UndefinedMetric("no observations".into()));
    }
    Ok(())
}

/// `sum (yhat - y)^2 / sum (y - mean y)^2`
pub fn normalized_mse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_pair(pred, truth)?;
    let mean = truth.iter().sum::<f64>() / truth.len() as f64;
    let total: f64 = truth.iter().map(|y| (y - mean).powi(2)).sum();
    if !(total > 0.0) {
        return Err(Error::UndefinedMetric("targets have zero variance".into()));
    }
    let resid: f64 = pred.iter().zip(truth).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(resid / total)
}

/// Fraction of sign mismatches; a zero prediction counts as +1.
pub fn classification_error(pred: &[f64], labels: &[f64]) -> Result<f64> {
    check_pair(pred, labels)?;
    let sign = |v: f64| if v >= 0.0 { 1.0 } else { -1.0 };
    let wrong = pred.iter().zip(labels).filter(|(p, y)| sign(**p) != sign(**y)).count();
    Ok(wrong as f64 / labels.len() as f64)
}

/// Test-set metric of a linear predictor: normalized MSE for regression,
/// classification error for classification.
pub fn holdout_metric(shard: &Shard, task: Task, beta: &[f64]) -> Result<f64> {
    let xs = shard.xs();
    let pred: Vec<f64> = (0..xs.rows()).map(|i| dot_unchecked(xs.row(i), beta)).collect();
    match task {
        Task::Regression => normalized_mse(&pred, shard.ys()),
        Task::Classification => classification_error(&pred, shard.ys()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn error_examples() {
        let star = [1.0, 2.0, 0.0, 0.0];
        assert_eq!(estimation_errors(&star, &star).unwrap(), (0.0, 0.0));
        let hat = [4.0, 6.0, 0.0, 0.0];
        assert_eq!(estimation_errors(&hat, &star).unwrap(), (7.0, 5.0));
        assert!(estimation_errors(&hat[..3], &star).is_err());
    }

    #[test]
    fn metric_examples() {
        let y = [1.0, 2.0, 3.0, 6.0];
        assert_eq!(normalized_mse(&y, &y).unwrap(), 0.0);
        assert_eq!(normalized_mse(&[3.0; 4], &y).unwrap(), 1.0);
        assert!(matches!(normalized_mse(&[1.0; 2], &[2.0; 2]), Err(Error::UndefinedMetric(_))));
        let labels = [1.0, -1.0, 1.0, -1.0];
        assert_eq!(classification_error(&labels, &labels).unwrap(), 0.0);
        assert_eq!(classification_error(&[-2.0, 3.0, -0.5, 0.1], &labels).unwrap(), 1.0);
        assert_eq!(classification_error(&[0.0, 0.0], &[1.0, -1.0]).unwrap(), 0.5);
        assert!(classification_error(&[], &[]).is_err());
    }

    proptest! {
        #[test]
        fn errors_match_naive(pairs in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 1..40)) {
            let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let (l1, l2) = estimation_errors(&a, &b).unwrap();
            let mut n1 = 0.0;
            let mut n2 = 0.0;
            for i in 0..a.len() {
                n1 += (a[i] - b[i]).abs();
                n2 += (a[i] - b[i]) * (a[i] - b[i]);
            }
            prop_assert!((l1 - n1).abs() <= 1e-12 * n1.max(1.0));
            prop_assert!((l2 - n2.sqrt()).abs() <= 1e-12 * n2.sqrt().max(1.0));
        }
    }
}
