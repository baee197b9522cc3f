//! Gaussian predictive output and the conditioned GP layer every model is built from.

use serde::{Deserialize, Serialize};

use crate::core_math::{cholesky, kernel_matrix, linear_mean, CholFactor, KernelParams, LinearMeanParams, Matrix};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Lower bound applied to predictive variances before they reach a logarithm.
pub const VARIANCE_FLOOR: f64 = 1e-12;

/// Pointwise Gaussian predictions on the standardized output scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct PredictiveDistribution<T> {
    pub mean: Vec<T>,
    pub variance: Vec<T>,
    /// Mean of the deterministic component, present for composite models.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub det_mean: Option<Vec<T>>,
}

impl<T: Real> PredictiveDistribution<T> {
    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn sd(&self) -> Vec<T> {
        self.variance.iter().map(|v| v.sqrt()).collect()
    }

    /// Variances raised to at least [`VARIANCE_FLOOR`].
    pub fn floored_variance(&self) -> Vec<T> {
        let floor = T::lit(VARIANCE_FLOOR);
        self.variance.iter().map(|&v| v.max(floor)).collect()
    }
}

/// Serialized form of a [`GpLayer`]: parameters and training data, no factors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real", deny_unknown_fields)]
pub struct GpLayerSpec<T> {
    pub x: Matrix<T>,
    pub target: Vec<T>,
    pub mean: LinearMeanParams<T>,
    pub kernel: KernelParams<T>,
    /// Per-point variance added to the training diagonal on top of the nugget.
    pub noise: Vec<T>,
}

/// One GP conditioned on its training data:
/// `target ~ N(m(X), K(X, X) + nugget·I + diag(noise))`.
///
/// The factor and the solve `Σ⁻¹(target − m(X))` are cached at construction.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound = "T: Real", try_from = "GpLayerSpec<T>", into = "GpLayerSpec<T>")]
pub struct GpLayer<T: Real> {
    spec: GpLayerSpec<T>,
    chol: CholFactor<T>,
    weights: Vec<T>,
}

impl<T: Real> GpLayer<T> {
    pub fn new(spec: GpLayerSpec<T>) -> Result<Self> {
        let n = spec.x.nrows();
        if spec.target.len() != n || spec.noise.len() != n {
            return Err(Error::DimensionMismatch {
                context: "GpLayer training data",
                expected: n,
                actual: if spec.target.len() != n { spec.target.len() } else { spec.noise.len() },
            });
        }
        if spec.mean.dim() != spec.x.ncols() {
            return Err(Error::DimensionMismatch {
                context: "GpLayer mean",
                expected: spec.x.ncols(),
                actual: spec.mean.dim(),
            });
        }
        spec.kernel.validate()?;
        if spec.noise.iter().any(|v| !(v.is_finite() && *v >= T::zero())) {
            return Err(Error::NonFinite("GpLayer noise"));
        }
        let mut k = kernel_matrix(&spec.kernel, &spec.x, &spec.x, true)?;
        k.add_diagonal_vec(&spec.noise)?;
        let chol = cholesky(&k)?;
        let m = linear_mean(&spec.mean, &spec.x)?;
        let resid: Vec<T> = spec.target.iter().zip(&m).map(|(&t, &mv)| t - mv).collect();
        let weights = chol.solve_vec(&resid)?;
        Ok(Self { spec, chol, weights })
    }

    pub fn spec(&self) -> &GpLayerSpec<T> {
        &self.spec
    }

    pub fn x(&self) -> &Matrix<T> {
        &self.spec.x
    }

    pub fn target(&self) -> &[T] {
        &self.spec.target
    }

    pub fn mean_params(&self) -> &LinearMeanParams<T> {
        &self.spec.mean
    }

    pub fn kernel(&self) -> &KernelParams<T> {
        &self.spec.kernel
    }

    pub fn noise(&self) -> &[T] {
        &self.spec.noise
    }

    pub fn chol(&self) -> &CholFactor<T> {
        &self.chol
    }

    /// `Σ⁻¹(target − m(X))`.
    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn dim(&self) -> usize {
        self.spec.x.ncols()
    }

    /// Conditional mean and pre-clamp variance of the latent process at `xstar`.
    /// The nugget is not added to the predictive variance.
    pub fn predict_raw(&self, xstar: &Matrix<T>) -> Result<(Vec<T>, Vec<T>)> {
        if xstar.ncols() != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "prediction points",
                expected: self.dim(),
                actual: xstar.ncols(),
            });
        }
        if !xstar.is_finite() {
            return Err(Error::NonFinite("prediction points"));
        }
        // n × m cross-covariance K(X, X*)
        let cross = kernel_matrix(&self.spec.kernel, &self.spec.x, xstar, false)?;
        let prior_mean = linear_mean(&self.spec.mean, xstar)?;
        let mean: Vec<T> = (0..xstar.nrows())
            .map(|j| {
                let mut acc = prior_mean[j];
                for i in 0..self.spec.x.nrows() {
                    acc += cross[(i, j)] * self.weights[i];
                }
                acc
            })
            .collect();
        let explained = self.chol.quad_diag(&cross)?;
        let var = self.spec.kernel.variance();
        let variance = explained.into_iter().map(|q| var - q).collect();
        Ok((mean, variance))
    }

    /// Conditional mean and variance clamped below at zero.
    pub fn predict(&self, xstar: &Matrix<T>) -> Result<(Vec<T>, Vec<T>)> {
        let (mean, mut variance) = self.predict_raw(xstar)?;
        for v in &mut variance {
            *v = v.max(T::zero());
        }
        Ok((mean, variance))
    }
}

impl<T: Real> TryFrom<GpLayerSpec<T>> for GpLayer<T> {
    type Error = Error;

    fn try_from(spec: GpLayerSpec<T>) -> Result<Self> {
        Self::new(spec)
    }
}

impl<T: Real> From<GpLayer<T>> for GpLayerSpec<T> {
    fn from(layer: GpLayer<T>) -> Self {
        layer.spec
    }
}

impl<T: Real> PartialEq for GpLayer<T> {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn layer(noise: f64) -> GpLayer<f64> {
        GpLayer::new(GpLayerSpec {
            x: Matrix::from_rows(&[[0.0], [1.0]]).unwrap(),
            target: vec![1.0, -1.0],
            mean: LinearMeanParams::zero(1),
            kernel: KernelParams::new(1.0, vec![1.0], 0.0).unwrap(),
            noise: vec![noise; 2],
        })
        .unwrap()
    }

    #[test]
    fn two_point_conditioning_by_hand() {
        let l = layer(0.0);
        // Σ = [[1, e⁻¹], [e⁻¹, 1]]; at x* = 0.5 both cross terms are e^(-1/4)
        let c = (-1.0f64).exp();
        let k = (-0.25f64).exp();
        let det = 1.0 - c * c;
        let w = [(1.0 + c) / det, (-1.0 - c) / det];
        let (m, v) = l.predict(&Matrix::from_rows(&[[0.5]]).unwrap()).unwrap();
        assert_relative_eq!(m[0], k * (w[0] + w[1]), epsilon = 1e-12);
        assert_relative_eq!(m[0], 0.0, epsilon = 1e-12);
        // kᵀΣ⁻¹k with k = (k, k): 2k²(1 - c)/det = 2k²/(1 + c)
        assert_relative_eq!(v[0], 1.0 - 2.0 * k * k / (1.0 + c), epsilon = 1e-12);
    }

    #[test]
    fn noise_widens_variance_and_shrinks_mean() {
        let xs = Matrix::from_rows(&[[0.0], [0.2]]).unwrap();
        let (m0, v0) = layer(0.0).predict(&xs).unwrap();
        let (m1, v1) = layer(1.0).predict(&xs).unwrap();
        for j in 0..2 {
            assert!(v1[j] > v0[j]);
            assert!(m1[j].abs() < m0[j].abs());
        }
    }

    #[test]
    fn serde_round_trip_preserves_predictions() {
        let l = layer(0.1);
        let json = serde_json::to_string(&l).unwrap();
        let back: GpLayer<f64> = serde_json::from_str(&json).unwrap();
        let xs = Matrix::from_rows(&[[0.3], [0.9]]).unwrap();
        assert_eq!(l.predict(&xs).unwrap(), back.predict(&xs).unwrap());
    }

    #[test]
    fn rejects_bad_shapes() {
        let l = layer(0.0);
        assert!(l.predict(&Matrix::zeros(1, 2)).is_err());
        let mut spec = l.spec().clone();
        spec.noise.pop();
        assert!(GpLayer::new(spec).is_err());
    }
}
