//! Deterministic GP emulator fit to runs of a deterministic approximation.

use serde::{Deserialize, Serialize};

use crate::core_math::{KernelParams, LinearMeanParams, Matrix};
use crate::error::{Error, Result};
use crate::inference::{map_optimize, FitConfig, GpObjective, RestartReport};
use crate::predictive::{GpLayer, GpLayerSpec, PredictiveDistribution};
use crate::scalar::Real;

/// How a MAP fit went: the winning restart and every restart's outcome.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub log_posterior: f64,
    pub best_restart: usize,
    pub restarts: Vec<RestartReport>,
}

impl FitDiagnostics {
    pub fn converged_restarts(&self) -> usize {
        self.restarts.iter().filter(|r| r.converged()).count()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real", deny_unknown_fields)]
pub struct DetGpModel<T: Real> {
    layer: GpLayer<T>,
    /// Lower bound the lengthscales were constrained to, if any.
    lengthscale_floor: Option<T>,
    #[serde(default)]
    diagnostics: FitDiagnostics,
}

impl<T: Real> DetGpModel<T> {
    /// MAP fit to `(x_det, y_det)`.
    ///
    /// With `constrain_lengthscale` every lengthscale is optimized as
    /// `cfg.det_lengthscale_floor + l*`; otherwise the lengthscales are free.
    pub fn fit(
        x_det: &Matrix<T>,
        y_det: &[T],
        cfg: &FitConfig,
        constrain_lengthscale: bool,
        seed: u64,
    ) -> Result<Self> {
        cfg.validate()?;
        if x_det.nrows() < 2 {
            return Err(Error::InvalidArgument(format!(
                "deterministic GP needs at least 2 runs, got {}",
                x_det.nrows()
            )));
        }
        check_unit_inputs(x_det)?;
        let floor = constrain_lengthscale.then(|| T::lit(cfg.det_lengthscale_floor));
        let nugget = T::lit(cfg.nugget);
        let obj = GpObjective::new(x_det.clone(), y_det.to_vec(), cfg.prior(), nugget, floor)?;
        let best = map_optimize(&obj, &cfg.optimizer(), seed)?;
        let (mean, kernel) = obj.codec().decode(&best.theta);
        let diagnostics = FitDiagnostics {
            log_posterior: best.log_posterior.as_f64(),
            best_restart: best.best_restart,
            restarts: best.restarts,
        };
        let mut model = Self::from_params(x_det.clone(), y_det.to_vec(), mean, kernel)
            .map_err(|e| Error::Fit(format!("deterministic GP at the MAP estimate: {e}")))?;
        model.lengthscale_floor = floor;
        model.diagnostics = diagnostics;
        Ok(model)
    }

    /// Conditions a GP with the given parameters on `(x_det, y_det)`.
    pub fn from_params(
        x_det: Matrix<T>,
        y_det: Vec<T>,
        mean: LinearMeanParams<T>,
        kernel: KernelParams<T>,
    ) -> Result<Self> {
        let n = x_det.nrows();
        let layer = GpLayer::new(GpLayerSpec {
            x: x_det,
            target: y_det,
            mean,
            kernel,
            noise: vec![T::zero(); n],
        })?;
        Ok(Self {
            layer,
            lengthscale_floor: None,
            diagnostics: FitDiagnostics::default(),
        })
    }

    pub fn predict(&self, xstar: &Matrix<T>) -> Result<PredictiveDistribution<T>> {
        let (mean, variance) = self.layer.predict(xstar)?;
        Ok(PredictiveDistribution {
            mean,
            variance,
            det_mean: None,
        })
    }

    /// Predictions before the variance is clamped at zero.
    pub fn predict_unclamped(&self, xstar: &Matrix<T>) -> Result<PredictiveDistribution<T>> {
        let (mean, variance) = self.layer.predict_raw(xstar)?;
        Ok(PredictiveDistribution {
            mean,
            variance,
            det_mean: None,
        })
    }

    pub fn layer(&self) -> &GpLayer<T> {
        &self.layer
    }

    pub fn mean_params(&self) -> &LinearMeanParams<T> {
        self.layer.mean_params()
    }

    pub fn kernel(&self) -> &KernelParams<T> {
        self.layer.kernel()
    }

    pub fn lengthscale_floor(&self) -> Option<T> {
        self.lengthscale_floor
    }

    pub fn diagnostics(&self) -> &FitDiagnostics {
        &self.diagnostics
    }

    pub fn dim(&self) -> usize {
        self.layer.dim()
    }
}

pub(crate) fn check_unit_inputs<T: Real>(x: &Matrix<T>) -> Result<()> {
    for row in x.rows_iter() {
        for (dim, &v) in row.iter().enumerate() {
            if !(v >= T::zero() && v <= T::one()) {
                return Err(Error::OutOfRange {
                    dim,
                    value: v.as_f64(),
                });
            }
        }
    }
    Ok(())
}
