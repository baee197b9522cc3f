//! Evaluation metrics: squared error against the true mean, squared error against
//! held-out simulator draws, and the Gaussian predictive score.

use serde::{Deserialize, Serialize};

use crate::core_math::Matrix;
use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricTriple {
    /// Absent when the simulator has no analytic mean.
    pub true_mse: Option<f64>,
    pub mse: f64,
    pub score: f64,
}

fn check_len(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            actual,
        })
    }
}

fn check_draws<T: Real>(pred_means: &[T], draws: &Matrix<T>) -> Result<()> {
    check_len("simulator draws (columns)", pred_means.len(), draws.ncols())?;
    if draws.nrows() == 0 {
        return Err(Error::InvalidArgument("need at least one draw per test point".into()));
    }
    Ok(())
}

/// Mean squared difference between predictive and true means.
pub fn true_mse<T: Real>(pred_means: &[T], true_means: &[T]) -> Result<T> {
    check_len("true means", pred_means.len(), true_means.len())?;
    if pred_means.is_empty() {
        return Err(Error::InvalidArgument("no test points".into()));
    }
    let sum: T = pred_means
        .iter()
        .zip(true_means)
        .map(|(&p, &t)| (p - t) * (p - t))
        .sum();
    Ok(sum / T::lit(pred_means.len() as f64))
}

/// Mean squared deviation of every draw (rows: replicate runs, columns: test
/// points) from the predictive mean at its test point.
pub fn empirical_mse<T: Real>(pred_means: &[T], draws: &Matrix<T>) -> Result<T> {
    check_draws(pred_means, draws)?;
    let mut sum = T::zero();
    for row in draws.rows_iter() {
        for (&y, &m) in row.iter().zip(pred_means) {
            sum += (y - m) * (y - m);
        }
    }
    Ok(sum / T::lit((draws.nrows() * draws.ncols()) as f64))
}

/// `Σ −((y − μ)/σ)² − log σ²` over every (draw, test point) pair; higher is better.
pub fn score<T: Real>(pred_means: &[T], pred_vars: &[T], draws: &Matrix<T>) -> Result<T> {
    check_draws(pred_means, draws)?;
    check_len("predictive variances", pred_means.len(), pred_vars.len())?;
    if let Some((j, v)) = pred_vars
        .iter()
        .enumerate()
        .find(|(_, v)| !(**v > T::zero() && v.is_finite()))
    {
        return Err(Error::InvalidArgument(format!(
            "predictive variance at test point {j} must be positive, got {v}"
        )));
    }
    let log_var: Vec<T> = pred_vars.iter().map(|v| v.ln()).collect();
    let mut total = T::zero();
    for row in draws.rows_iter() {
        for ((&y, &m), (&v, &lv)) in row.iter().zip(pred_means).zip(pred_vars.iter().zip(&log_var)) {
            total -= (y - m) * (y - m) / v + lv;
        }
    }
    Ok(total)
}

/// All three metrics; `true_means` is optional.
pub fn metric_triple<T: Real>(
    pred_means: &[T],
    pred_vars: &[T],
    true_means: Option<&[T]>,
    draws: &Matrix<T>,
) -> Result<MetricTriple> {
    Ok(MetricTriple {
        true_mse: true_means
            .map(|t| true_mse(pred_means, t).map(Real::as_f64))
            .transpose()?,
        mse: empirical_mse(pred_means, draws)?.as_f64(),
        score: score(pred_means, pred_vars, draws)?.as_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn true_mse_examples() {
        assert_eq!(true_mse(&[0.3, -1.0], &[0.3, -1.0]).unwrap(), 0.0);
        assert_eq!(true_mse(&[0.0, 0.0], &[1.0, 3.0]).unwrap(), 5.0);
        assert!(true_mse(&[0.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn empirical_mse_examples() {
        let pred = [0.5, -0.5];
        let same = Matrix::from_rows(&[pred, pred]).unwrap();
        assert_eq!(empirical_mse(&pred, &same).unwrap(), 0.0);
        let column = Matrix::from_rows(&[[1.0], [-1.0]]).unwrap();
        assert_eq!(empirical_mse(&[0.0], &column).unwrap(), 1.0);
        assert!(empirical_mse(&[0.0, 1.0], &column).is_err());
        assert!(empirical_mse::<f64>(&[0.0], &Matrix::zeros(0, 1)).is_err());
    }

    #[test]
    fn empirical_mse_estimates_intrinsic_variance() {
        let (mu, sigma) = (1.5f64, 0.7f64);
        let normal = Normal::new(mu, sigma).unwrap();
        let mut rng = rng_from(4);
        let draws = Matrix::from_fn(10_000, 1, |_, _| normal.sample(&mut rng));
        let v = empirical_mse(&[mu], &draws).unwrap();
        assert!((v / (sigma * sigma) - 1.0).abs() < 0.05, "{v}");
    }

    #[test]
    fn score_examples() {
        let mu = vec![0.25; 10];
        let draws = Matrix::from_fn(10, 10, |_, _| 0.25);
        assert_eq!(score(&mu, &vec![1.0; 10], &draws).unwrap(), 0.0);
        let one = Matrix::from_rows(&[[1.0]]).unwrap();
        assert_eq!(score(&[0.0], &[1.0], &one).unwrap(), -1.0);
        assert!(score(&[0.0], &[0.0], &one).is_err());
        assert!(score(&[0.0], &[-1.0], &one).is_err());
    }

    #[test]
    fn triple_without_truth() {
        let draws = Matrix::from_rows(&[[1.0, 2.0]]).unwrap();
        let t = metric_triple(&[1.0, 2.0], &[1.0, 1.0], None, &draws).unwrap();
        assert_eq!(t.true_mse, None);
        assert_eq!((t.mse, t.score), (0.0, 0.0));
        let t = metric_triple(&[1.0, 2.0], &[1.0, 1.0], Some(&[0.0, 2.0][..]), &draws).unwrap();
        assert_eq!(t.true_mse, Some(0.5));
    }

    #[test]
    fn score_proper_at_generating_parameters() {
        let (mu, var) = (0.3f64, 0.8f64);
        let normal = Normal::new(mu, var.sqrt()).unwrap();
        let mut rng = rng_from(10);
        let (mut shifted_wins, mut wide_wins) = (0, 0);
        for _ in 0..50 {
            let draws = Matrix::from_fn(1000, 1, |_, _| normal.sample(&mut rng));
            let truth = score(&[mu], &[var], &draws).unwrap();
            shifted_wins += (truth > score(&[mu + 0.5], &[var], &draws).unwrap()) as usize;
            wide_wins += (truth > score(&[mu], &[2.0 * var], &draws).unwrap()) as usize;
        }
        assert!(shifted_wins >= 48, "{shifted_wins}/50");
        assert!(wide_wins >= 48, "{wide_wins}/50");
    }

    fn naive(mu: &[f64], var: &[f64], truth: &[f64], draws: &[Vec<f64>]) -> (f64, f64, f64) {
        let m = mu.len();
        let mut t = 0.0;
        for j in 0..m {
            t += (mu[j] - truth[j]) * (mu[j] - truth[j]);
        }
        let (mut e, mut s) = (0.0, 0.0);
        for row in draws {
            for j in 0..m {
                let r = row[j] - mu[j];
                e += r * r;
                s += -(r * r) / var[j] - var[j].ln();
            }
        }
        (t / m as f64, e / (draws.len() * m) as f64, s)
    }

    fn case() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>, Vec<Vec<f64>>)> {
        (1usize..8, 1usize..6).prop_flat_map(|(m, r)| {
            (
                prop::collection::vec(-3.0..3.0f64, m),
                prop::collection::vec(0.01..4.0f64, m),
                prop::collection::vec(-3.0..3.0f64, m),
                prop::collection::vec(prop::collection::vec(-5.0..5.0f64, m), r),
            )
        })
    }

    proptest! {
        #[test]
        fn matches_naive_loops((mu, var, truth, draws) in case()) {
            let mat = Matrix::from_rows(&draws).unwrap();
            let (t, e, s) = naive(&mu, &var, &truth, &draws);
            assert_relative_eq!(true_mse(&mu, &truth).unwrap(), t, max_relative = 1e-12);
            assert_relative_eq!(empirical_mse(&mu, &mat).unwrap(), e, max_relative = 1e-12);
            assert_relative_eq!(score(&mu, &var, &mat).unwrap(), s, max_relative = 1e-12, epsilon = 1e-12);
            prop_assert!(e >= 0.0);
        }

        #[test]
        fn permutation_invariant((mu, var, truth, draws) in case(), seed in 0u64..1000) {
            use rand::seq::SliceRandom;
            let m = mu.len();
            let mut perm: Vec<usize> = (0..m).collect();
            perm.shuffle(&mut rng_from(seed));
            let p = |v: &[f64]| perm.iter().map(|&j| v[j]).collect::<Vec<_>>();
            let mat = Matrix::from_rows(&draws).unwrap();
            let pmat = Matrix::from_rows(&draws.iter().map(|r| p(r)).collect::<Vec<_>>()).unwrap();
            assert_relative_eq!(true_mse(&mu, &truth).unwrap(), true_mse(&p(&mu), &p(&truth)).unwrap(), max_relative = 1e-12);
            assert_relative_eq!(empirical_mse(&mu, &mat).unwrap(), empirical_mse(&p(&mu), &pmat).unwrap(), max_relative = 1e-12);
            assert_relative_eq!(score(&mu, &var, &mat).unwrap(), score(&p(&mu), &p(&var), &pmat).unwrap(), max_relative = 1e-12, epsilon = 1e-12);
            prop_assert_eq!(true_mse(&mu, &mu).unwrap(), 0.0);
        }
    }
}
