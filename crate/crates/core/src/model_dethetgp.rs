//! The composite emulator: a deterministic GP on deterministic-approximation runs
//! plus a heteroscedastic GP on the stochastic runs' residuals around it.

use serde::{Deserialize, Serialize};

use crate::core_math::Matrix;
use crate::error::{Error, Result};
use crate::inference::FitConfig;
use crate::model_detgp::DetGpModel;
use crate::model_hetgp::HetGpModel;
use crate::predictive::PredictiveDistribution;
use crate::rng::derive_seed;
use crate::scalar::Real;

const DET_STAGE: u64 = 0;
const HET_STAGE: u64 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real", deny_unknown_fields)]
pub struct DetHetGpModel<T: Real> {
    det: DetGpModel<T>,
    het: HetGpModel<T>,
}

impl<T: Real> DetHetGpModel<T> {
    /// Two-stage fit: the deterministic GP on `(x_det, y_det)`, then the
    /// heteroscedastic GP on `y` minus the deterministic GP's mean at `x`.
    pub fn fit(
        x: &Matrix<T>,
        y: &[T],
        x_det: &Matrix<T>,
        y_det: &[T],
        cfg: &FitConfig,
        seed: u64,
    ) -> Result<Self> {
        if x.ncols() != x_det.ncols() {
            return Err(Error::DimensionMismatch {
                context: "deterministic and stochastic input dimension",
                expected: x.ncols(),
                actual: x_det.ncols(),
            });
        }
        let det = DetGpModel::fit(
            x_det,
            y_det,
            cfg,
            cfg.constrain_det_lengthscale,
            derive_seed(seed, DET_STAGE),
        )?;
        Self::fit_with_det(det, x, y, cfg, derive_seed(seed, HET_STAGE))
    }

    /// Second stage only, on top of an already fitted deterministic layer.
    pub fn fit_with_det(
        det: DetGpModel<T>,
        x: &Matrix<T>,
        y: &[T],
        cfg: &FitConfig,
        seed: u64,
    ) -> Result<Self> {
        if y.len() != x.nrows() {
            return Err(Error::DimensionMismatch {
                context: "DetHetGP stochastic targets",
                expected: x.nrows(),
                actual: y.len(),
            });
        }
        let at_x = det.predict(x)?;
        let residuals: Vec<T> = y.iter().zip(&at_x.mean).map(|(&v, &m)| v - m).collect();
        let extra = cfg.propagate_det_variance.then_some(at_x.variance);
        let het = HetGpModel::fit(x, &residuals, cfg, extra, seed)?;
        Ok(Self { det, het })
    }

    /// Assembles a model from fitted components; the residual layer must have been
    /// conditioned on `y - det.mean(X)`.
    pub fn from_parts(det: DetGpModel<T>, het: HetGpModel<T>) -> Result<Self> {
        if det.dim() != het.dim() {
            return Err(Error::DimensionMismatch {
                context: "DetHetGP component dimension",
                expected: det.dim(),
                actual: het.dim(),
            });
        }
        Ok(Self { det, het })
    }

    /// Sum of the two conditioned layers, treated as independent.
    pub fn predict(&self, xstar: &Matrix<T>) -> Result<PredictiveDistribution<T>> {
        let d = self.det.predict(xstar)?;
        let h = self.het.predict(xstar)?;
        Ok(PredictiveDistribution {
            mean: d.mean.iter().zip(&h.mean).map(|(&a, &b)| a + b).collect(),
            variance: d.variance.iter().zip(&h.variance).map(|(&a, &b)| a + b).collect(),
            det_mean: Some(d.mean),
        })
    }

    pub fn det(&self) -> &DetGpModel<T> {
        &self.det
    }

    pub fn het(&self) -> &HetGpModel<T> {
        &self.het
    }

    /// Targets the residual layer was fit to: `y - det.mean(X)`.
    pub fn residual_targets(&self) -> &[T] {
        self.het.main_layer().target()
    }

    pub fn dim(&self) -> usize {
        self.det.dim()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core_math::{KernelParams, LinearMeanParams, DEFAULT_NUGGET};
    use crate::design_lhs::maximin_lhs;
    use crate::inference::VariancePlugin;
    use crate::model_hetgp::HetGpParams;
    use approx::assert_relative_eq;

    fn quick() -> FitConfig {
        FitConfig {
            restarts: 3,
            ..FitConfig::default()
        }
    }

    fn toy_data(n: usize, seed: u64) -> (Matrix<f64>, Vec<f64>) {
        let design = maximin_lhs::<f64>(n, 1, seed, 50).unwrap();
        let y = design
            .points
            .rows_iter()
            .enumerate()
            .map(|(i, r)| (6.0 * r[0]).sin() + 0.3 * ((i * 7919 % 13) as f64 / 13.0 - 0.5))
            .collect();
        (design.points, y)
    }

    #[test]
    fn zero_deterministic_signal_reduces_to_hetgp() {
        let (x, y) = toy_data(10, 1);
        let x_det = Matrix::from_rows(&[[0.1], [0.5], [0.9]]).unwrap();
        let det = DetGpModel::from_params(
            x_det,
            vec![0.0; 3],
            LinearMeanParams::zero(1),
            KernelParams::new(1.0, vec![0.3], DEFAULT_NUGGET).unwrap(),
        )
        .unwrap();
        let composite = DetHetGpModel::fit_with_det(det, &x, &y, &quick(), 17).unwrap();
        let plain = HetGpModel::fit(&x, &y, &quick(), None, 17).unwrap();
        let xs = Matrix::from_fn(25, 1, |i, _| i as f64 / 24.0);
        let (pc, ph) = (composite.predict(&xs).unwrap(), plain.predict(&xs).unwrap());
        let pd = composite.det().predict(&xs).unwrap();
        for j in 0..25 {
            assert!((pc.mean[j] - ph.mean[j]).abs() < 1e-6);
            // the composite also carries the deterministic layer's own variance
            assert!((pc.variance[j] - pd.variance[j] - ph.variance[j]).abs() < 1e-6);
        }
    }

    #[test]
    fn predictions_are_additive() {
        let (x, y) = toy_data(12, 2);
        let x_det = Matrix::from_fn(5, 1, |i, _| i as f64 / 4.0);
        let y_det: Vec<f64> = x_det.rows_iter().map(|r| (6.0 * r[0]).sin() + 0.2).collect();
        let model = DetHetGpModel::fit(&x, &y, &x_det, &y_det, &quick(), 4).unwrap();
        let xs = Matrix::from_fn(30, 1, |i, _| i as f64 / 29.0);
        let p = model.predict(&xs).unwrap();
        let d = model.det().predict(&xs).unwrap();
        let h = model.het().predict(&xs).unwrap();
        for j in 0..30 {
            assert!((p.mean[j] - d.mean[j] - h.mean[j]).abs() <= 1e-12);
            assert!((p.variance[j] - d.variance[j] - h.variance[j]).abs() <= 1e-12);
            assert_eq!(p.det_mean.as_ref().unwrap()[j], d.mean[j]);
        }
        let recomputed = model.det().predict(&x).unwrap().mean;
        for (j, r) in model.residual_targets().iter().enumerate() {
            assert!((r - (y[j] - recomputed[j])).abs() <= 1e-12);
        }
        assert!(model.det().kernel().lengthscales.iter().all(|&l| l >= 0.05));
    }

    #[test]
    fn far_field_reverts_to_both_priors() {
        let x_det = Matrix::from_rows(&[[0.1], [0.8]]).unwrap();
        let det = DetGpModel::from_params(
            x_det,
            vec![1.0, 0.5],
            LinearMeanParams { intercept: 0.4, slopes: vec![0.1] },
            KernelParams::new(1.2, vec![0.3], DEFAULT_NUGGET).unwrap(),
        )
        .unwrap();
        let x = Matrix::from_rows(&[[0.2], [0.6]]).unwrap();
        let het = HetGpModel::from_params(
            x,
            vec![0.1, -0.2],
            HetGpParams {
                mean: LinearMeanParams { intercept: -0.1, slopes: vec![0.2] },
                kernel: KernelParams::new(0.8, vec![0.2], DEFAULT_NUGGET).unwrap(),
                var_mean: LinearMeanParams { intercept: -2.0, slopes: vec![0.0] },
                var_kernel: KernelParams::new(0.5, vec![0.4], DEFAULT_NUGGET).unwrap(),
                lambda: vec![-1.5, -2.5],
            },
            None,
            VariancePlugin::Mode,
        )
        .unwrap();
        let model = DetHetGpModel::from_parts(det, het).unwrap();
        let far = Matrix::from_rows(&[[25.0]]).unwrap();
        let p = model.predict(&far).unwrap();
        assert_relative_eq!(p.mean[0], (0.4 + 2.5) + (-0.1 + 5.0), epsilon = 1e-12);
        assert_relative_eq!(p.variance[0], 1.44 + 0.64 + (-2.0f64).exp(), epsilon = 1e-12);
    }

    #[test]
    fn propagated_variance_enters_residual_noise() {
        let (x, y) = toy_data(10, 6);
        let x_det = Matrix::from_rows(&[[0.0], [0.5], [1.0]]).unwrap();
        let y_det = vec![0.0, 1.0, -0.5];
        let cfg = FitConfig {
            propagate_det_variance: true,
            ..quick()
        };
        let model = DetHetGpModel::fit(&x, &y, &x_det, &y_det, &cfg, 9).unwrap();
        let v_det = model.det().predict(&x).unwrap().variance;
        assert_eq!(model.het().extra_noise(), v_det.as_slice());
        assert!(v_det.iter().any(|&v| v > 1e-6));
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let (x, y) = toy_data(8, 0);
        let x_det = Matrix::from_rows(&[[0.1, 0.2], [0.5, 0.9]]).unwrap();
        assert!(matches!(
            DetHetGpModel::fit(&x, &y, &x_det, &[0.0, 1.0], &quick(), 0),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn serde_round_trip() {
        let (x, y) = toy_data(8, 3);
        let x_det = Matrix::from_fn(4, 1, |i, _| i as f64 / 3.0);
        let y_det: Vec<f64> = x_det.rows_iter().map(|r| (6.0 * r[0]).sin()).collect();
        let model = DetHetGpModel::fit(&x, &y, &x_det, &y_det, &quick(), 1).unwrap();
        let back: DetHetGpModel<f64> = serde_json::from_str(&serde_json::to_string(&model).unwrap()).unwrap();
        let xs = Matrix::from_fn(11, 1, |i, _| i as f64 / 10.0);
        let (a, b) = (model.predict(&xs).unwrap(), back.predict(&xs).unwrap());
        for j in 0..11 {
            assert!((a.mean[j] - b.mean[j]).abs() <= 1e-12);
            assert!((a.variance[j] - b.variance[j]).abs() <= 1e-12);
        }
    }
}
