//! Squared exponential covariance and linear mean functions.
//!
//! The covariance is `α² ∏ᵢ exp(-((xᵢ - x'ᵢ)/lᵢ)²)`. There is no factor of two in
//! the exponent: the lengthscale priors are calibrated to this form.

use serde::{Deserialize, Serialize};

use super::linalg::Matrix;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Default jitter added to the diagonal of every training covariance.
pub const DEFAULT_NUGGET: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelParams<T> {
    pub alpha: T,
    pub lengthscales: Vec<T>,
    pub nugget: T,
}

impl<T: Real> KernelParams<T> {
    pub fn new(alpha: T, lengthscales: Vec<T>, nugget: T) -> Result<Self> {
        let p = Self {
            alpha,
            lengthscales,
            nugget,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > T::zero() && self.alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "kernel alpha must be positive, got {}",
                self.alpha
            )));
        }
        if let Some(l) = self
            .lengthscales
            .iter()
            .find(|l| !(**l > T::zero() && l.is_finite()))
        {
            return Err(Error::InvalidArgument(format!(
                "lengthscales must be positive, got {l}"
            )));
        }
        if !(self.nugget >= T::zero() && self.nugget.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "nugget must be non-negative, got {}",
                self.nugget
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    #[inline]
    pub fn variance(&self) -> T {
        self.alpha * self.alpha
    }

    /// Covariance between two single points.
    #[inline]
    pub fn eval(&self, a: &[T], b: &[T]) -> T {
        let mut expo = T::zero();
        for ((&x, &y), &l) in a.iter().zip(b).zip(&self.lengthscales) {
            let z = (x - y) / l;
            expo += z * z;
        }
        self.variance() * (-expo).exp()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearMeanParams<T> {
    pub intercept: T,
    pub slopes: Vec<T>,
}

impl<T: Real> LinearMeanParams<T> {
    pub fn zero(d: usize) -> Self {
        Self {
            intercept: T::zero(),
            slopes: vec![T::zero(); d],
        }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.slopes.len()
    }

    #[inline]
    pub fn eval(&self, x: &[T]) -> T {
        self.intercept + super::linalg::dot(&self.slopes, x)
    }
}

fn check_points<T: Real>(context: &'static str, d: usize, points: &Matrix<T>) -> Result<()> {
    if points.nrows() > 0 && points.ncols() != d {
        return Err(Error::DimensionMismatch {
            context,
            expected: d,
            actual: points.ncols(),
        });
    }
    if !points.is_finite() {
        return Err(Error::NonFinite(context));
    }
    Ok(())
}

/// Cross-covariance matrix `K(A, B)`.
///
/// When `add_nugget` is set and `A` and `B` are the same point set, the nugget is
/// added to the diagonal.
pub fn kernel_matrix<T: Real>(
    params: &KernelParams<T>,
    a: &Matrix<T>,
    b: &Matrix<T>,
    add_nugget: bool,
) -> Result<Matrix<T>> {
    check_points("kernel_matrix (A)", params.dim(), a)?;
    check_points("kernel_matrix (B)", params.dim(), b)?;
    let same = std::ptr::eq(a, b) || a == b;
    let mut k = if same {
        let n = a.nrows();
        let mut k = Matrix::zeros(n, n);
        for i in 0..n {
            k[(i, i)] = params.variance();
            for j in 0..i {
                let v = params.eval(a.row(i), a.row(j));
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        k
    } else {
        Matrix::from_fn(a.nrows(), b.nrows(), |i, j| params.eval(a.row(i), b.row(j)))
    };
    if add_nugget && same {
        k.add_diagonal(params.nugget);
    }
    Ok(k)
}

/// Evaluates `β₀ + xᵀβ` at every row of `points`.
pub fn linear_mean<T: Real>(params: &LinearMeanParams<T>, points: &Matrix<T>) -> Result<Vec<T>> {
    check_points("linear_mean", params.dim(), points)?;
    Ok(points.rows_iter().map(|r| params.eval(r)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn kp(alpha: f64, ls: &[f64]) -> KernelParams<f64> {
        KernelParams::new(alpha, ls.to_vec(), 0.0).unwrap()
    }

    fn m(rows: &[&[f64]]) -> Matrix<f64> {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn kernel_at_coincident_points_is_alpha_squared() {
        let a = m(&[&[0.3]]);
        let k = kernel_matrix(&kp(1.0, &[1.0]), &a, &a, false).unwrap();
        assert_eq!(k[(0, 0)], 1.0);
    }

    #[test]
    fn kernel_hand_values() {
        let k = kernel_matrix(&kp(2.0, &[1.0]), &m(&[&[0.0]]), &m(&[&[1.0]]), false).unwrap();
        assert_relative_eq!(k[(0, 0)], 4.0 * (-1.0f64).exp(), epsilon = 1e-14);
        assert_relative_eq!(k[(0, 0)], 1.4715, epsilon = 1e-4);

        let k = kernel_matrix(
            &kp(1.0, &[0.5, 2.0]),
            &m(&[&[0.0, 0.0]]),
            &m(&[&[0.5, 1.0]]),
            false,
        )
        .unwrap();
        assert_relative_eq!(k[(0, 0)], (-1.0f64).exp() * (-0.25f64).exp(), epsilon = 1e-14);
        assert_relative_eq!(k[(0, 0)], 0.2865, epsilon = 1e-4);
    }

    #[test]
    fn nugget_only_on_same_points() {
        let p = KernelParams::new(1.0, vec![1.0], 0.5).unwrap();
        let a = m(&[&[0.0], &[1.0]]);
        let b = m(&[&[0.0], &[2.0]]);
        let kaa = kernel_matrix(&p, &a, &a, true).unwrap();
        assert_eq!(kaa[(0, 0)], 1.5);
        let kab = kernel_matrix(&p, &a, &b, true).unwrap();
        assert_eq!(kab[(0, 0)], 1.0);
    }

    #[test]
    fn kernel_errors() {
        let p = kp(1.0, &[1.0, 1.0]);
        assert!(kernel_matrix(&p, &m(&[&[0.0]]), &m(&[&[0.0]]), false).is_err());
        let bad = m(&[&[f64::NAN, 0.0]]);
        assert!(matches!(
            kernel_matrix(&p, &bad, &bad, false),
            Err(Error::NonFinite(_))
        ));
        assert!(KernelParams::new(0.0, vec![1.0], 0.0).is_err());
        assert!(KernelParams::new(1.0, vec![-1.0], 0.0).is_err());
        assert!(KernelParams::new(1.0, vec![1.0], -1e-3).is_err());
    }

    #[test]
    fn linear_mean_values() {
        let zero = LinearMeanParams::zero(2);
        assert_eq!(
            linear_mean(&zero, &m(&[&[0.4, 0.1], &[0.9, 0.7]])).unwrap(),
            vec![0.0, 0.0]
        );
        let p = LinearMeanParams {
            intercept: 1.0,
            slopes: vec![2.0],
        };
        assert_eq!(linear_mean(&p, &m(&[&[0.5]])).unwrap(), vec![2.0]);
        let p = LinearMeanParams {
            intercept: -1.0,
            slopes: vec![1.0, 1.0],
        };
        assert_eq!(linear_mean(&p, &m(&[&[0.25, 0.75]])).unwrap(), vec![0.0]);
        assert!(linear_mean(&p, &m(&[&[0.25]])).is_err());
    }

    /// Symmetric eigenvalues by cyclic Jacobi rotations (test oracle).
    fn jacobi_eigenvalues(mut a: Matrix<f64>) -> Vec<f64> {
        let n = a.nrows();
        for _sweep in 0..100 {
            let mut off = 0.0;
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        off += a[(i, j)] * a[(i, j)];
                    }
                }
            }
            if off < 1e-22 {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    if a[(p, q)].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[(k, p)];
                        let akq = a[(k, q)];
                        a[(k, p)] = c * akp - s * akq;
                        a[(k, q)] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[(p, k)];
                        let aqk = a[(q, k)];
                        a[(p, k)] = c * apk - s * aqk;
                        a[(q, k)] = s * apk + c * aqk;
                    }
                }
            }
        }
        a.diagonal()
    }

    fn points_strategy() -> impl Strategy<Value = (Matrix<f64>, Vec<f64>, f64)> {
        (1usize..=5, 2usize..=20).prop_flat_map(|(d, n)| {
            (
                proptest::collection::vec(0.0f64..1.0, n * d)
                    .prop_map(move |v| Matrix::from_vec(n, d, v).unwrap()),
                proptest::collection::vec(0.05f64..2.0, d),
                0.1f64..3.0,
            )
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn kernel_is_psd_and_bounded((pts, ls, alpha) in points_strategy()) {
            let p = KernelParams::new(alpha, ls, 0.0).unwrap();
            let k = kernel_matrix(&p, &pts, &pts, false).unwrap();
            let n = pts.nrows();
            for i in 0..n {
                for j in 0..n {
                    prop_assert_eq!(k[(i, j)], k[(j, i)]);
                    prop_assert!(k[(i, j)] >= 0.0 && k[(i, j)] <= alpha * alpha);
                }
                prop_assert_eq!(k[(i, i)], alpha * alpha);
            }
            for ev in jacobi_eigenvalues(k) {
                prop_assert!(ev >= -1e-10, "eigenvalue {}", ev);
            }
        }

        #[test]
        fn longer_lengthscale_raises_covariance(
            (pts, ls, alpha) in points_strategy(),
            which in 0usize..5,
            factor in 1.0f64..4.0,
        ) {
            let p = KernelParams::new(alpha, ls.clone(), 0.0).unwrap();
            let mut ls2 = ls;
            let i = which % ls2.len();
            ls2[i] *= factor;
            let p2 = KernelParams::new(alpha, ls2, 0.0).unwrap();
            let k1 = kernel_matrix(&p, &pts, &pts, false).unwrap();
            let k2 = kernel_matrix(&p2, &pts, &pts, false).unwrap();
            for (a, b) in k1.as_slice().iter().zip(k2.as_slice()) {
                prop_assert!(b >= a);
            }
        }
    }

    #[test]
    fn entries_strictly_below_alpha_squared_for_distinct_points() {
        let p = kp(1.5, &[0.3, 0.7]);
        let a = m(&[&[0.1, 0.2], &[0.15, 0.2], &[0.9, 0.95]]);
        let k = kernel_matrix(&p, &a, &a, false).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    assert!(k[(i, j)] < 2.25);
                }
            }
        }
    }
}
