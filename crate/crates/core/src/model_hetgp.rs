//! Heteroscedastic GP: a mean layer with per-point noise `exp(λ_j)`, where the
//! log-variances λ are themselves a GP.

use serde::{Deserialize, Serialize};

use crate::core_math::{KernelParams, LinearMeanParams, Matrix};
use crate::error::{Error, Result};
use crate::inference::{map_optimize, FitConfig, HetGpObjective, VariancePlugin};
use crate::model_detgp::{check_unit_inputs, FitDiagnostics};
use crate::predictive::{GpLayer, GpLayerSpec, PredictiveDistribution, VARIANCE_FLOOR};
use crate::scalar::Real;

/// Smallest training set a heteroscedastic fit accepts.
pub const MIN_HETGP_POINTS: usize = 5;

/// Fixed parameters of both layers, for building a model without optimization.
#[derive(Clone, Debug, PartialEq)]
pub struct HetGpParams<T> {
    pub mean: LinearMeanParams<T>,
    pub kernel: KernelParams<T>,
    pub var_mean: LinearMeanParams<T>,
    pub var_kernel: KernelParams<T>,
    pub lambda: Vec<T>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real", deny_unknown_fields)]
pub struct HetGpModel<T: Real> {
    /// Mean layer on the targets, noise `exp(λ) + extra`.
    main: GpLayer<T>,
    /// Log-variance layer, conditioned on λ.
    var_layer: GpLayer<T>,
    /// Fixed per-point variance added to the main layer on top of `exp(λ)`.
    extra_noise: Vec<T>,
    plugin: VariancePlugin,
    #[serde(default)]
    diagnostics: FitDiagnostics,
}

impl<T: Real> HetGpModel<T> {
    /// Joint MAP fit of both layers and the latent log-variances.
    ///
    /// `extra_noise`, when given, is a known variance per training point added to
    /// the main layer's diagonal (it is not estimated).
    pub fn fit(
        x: &Matrix<T>,
        y: &[T],
        cfg: &FitConfig,
        extra_noise: Option<Vec<T>>,
        seed: u64,
    ) -> Result<Self> {
        cfg.validate()?;
        if x.nrows() < MIN_HETGP_POINTS {
            return Err(Error::InvalidArgument(format!(
                "heteroscedastic GP needs at least {MIN_HETGP_POINTS} points, got {}",
                x.nrows()
            )));
        }
        check_unit_inputs(x)?;
        let obj = HetGpObjective::new(
            x.clone(),
            y.to_vec(),
            cfg.prior(),
            T::lit(cfg.nugget),
            extra_noise.clone(),
        )?;
        let best = map_optimize(&obj, &cfg.optimizer(), seed)?;
        let nl = obj.codec().len();
        let (mean, kernel) = obj.codec().decode(&best.theta[..nl]);
        let (var_mean, var_kernel) = obj.codec().decode(&best.theta[nl..2 * nl]);
        let params = HetGpParams {
            mean,
            kernel,
            var_mean,
            var_kernel,
            lambda: best.theta[2 * nl..].to_vec(),
        };
        let mut model = Self::from_params(x.clone(), y.to_vec(), params, extra_noise, cfg.variance_plugin)
            .map_err(|e| Error::Fit(format!("heteroscedastic GP at the MAP estimate: {e}")))?;
        model.diagnostics = FitDiagnostics {
            log_posterior: best.log_posterior.as_f64(),
            best_restart: best.best_restart,
            restarts: best.restarts,
        };
        Ok(model)
    }

    pub fn from_params(
        x: Matrix<T>,
        y: Vec<T>,
        params: HetGpParams<T>,
        extra_noise: Option<Vec<T>>,
        plugin: VariancePlugin,
    ) -> Result<Self> {
        let n = x.nrows();
        if params.lambda.len() != n {
            return Err(Error::DimensionMismatch {
                context: "HetGpModel latent log-variances",
                expected: n,
                actual: params.lambda.len(),
            });
        }
        let extra = extra_noise.unwrap_or_else(|| vec![T::zero(); n]);
        if extra.len() != n {
            return Err(Error::DimensionMismatch {
                context: "HetGpModel extra noise",
                expected: n,
                actual: extra.len(),
            });
        }
        let noise: Vec<T> = params
            .lambda
            .iter()
            .zip(&extra)
            .map(|(&l, &e)| l.exp() + e)
            .collect();
        if noise.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("exp(lambda)"));
        }
        let var_layer = GpLayer::new(GpLayerSpec {
            x: x.clone(),
            target: params.lambda,
            mean: params.var_mean,
            kernel: params.var_kernel,
            noise: vec![T::zero(); n],
        })?;
        let main = GpLayer::new(GpLayerSpec {
            x,
            target: y,
            mean: params.mean,
            kernel: params.kernel,
            noise,
        })?;
        Ok(Self {
            main,
            var_layer,
            extra_noise: extra,
            plugin,
            diagnostics: FitDiagnostics::default(),
        })
    }

    /// Predictive distribution of the latent log-variance `log δ²(x*)`.
    pub fn predict_variance(&self, xstar: &Matrix<T>) -> Result<PredictiveDistribution<T>> {
        let (mean, variance) = self.var_layer.predict(xstar)?;
        Ok(PredictiveDistribution {
            mean,
            variance,
            det_mean: None,
        })
    }

    /// Point estimate of the intrinsic variance `δ²(x*)` under the configured plug-in.
    pub fn intrinsic_variance(&self, xstar: &Matrix<T>) -> Result<Vec<T>> {
        let log_var = self.predict_variance(xstar)?;
        let half = T::lit(0.5);
        Ok(match self.plugin {
            VariancePlugin::Mode => log_var.mean.iter().map(|m| m.exp()).collect(),
            VariancePlugin::LognormalMean => log_var
                .mean
                .iter()
                .zip(&log_var.variance)
                .map(|(&m, &v)| (m + half * v).exp())
                .collect(),
        })
    }

    /// Predictions for a new simulator run at `xstar`: the mean layer's conditional
    /// mean, and its conditional variance plus `δ²(x*)`.
    pub fn predict(&self, xstar: &Matrix<T>) -> Result<PredictiveDistribution<T>> {
        let delta2 = self.intrinsic_variance(xstar)?;
        let (mean, latent) = self.main.predict(xstar)?;
        let floor = T::lit(VARIANCE_FLOOR);
        let variance = latent
            .iter()
            .zip(&delta2)
            .map(|(&v, &d)| (v + d).max(floor))
            .collect();
        Ok(PredictiveDistribution {
            mean,
            variance,
            det_mean: None,
        })
    }

    pub fn main_layer(&self) -> &GpLayer<T> {
        &self.main
    }

    pub fn variance_layer(&self) -> &GpLayer<T> {
        &self.var_layer
    }

    pub fn lambda(&self) -> &[T] {
        self.var_layer.target()
    }

    pub fn extra_noise(&self) -> &[T] {
        &self.extra_noise
    }

    pub fn plugin(&self) -> VariancePlugin {
        self.plugin
    }

    pub fn diagnostics(&self) -> &FitDiagnostics {
        &self.diagnostics
    }

    pub fn dim(&self) -> usize {
        self.main.dim()
    }

    pub fn params(&self) -> HetGpParams<T> {
        HetGpParams {
            mean: self.main.mean_params().clone(),
            kernel: self.main.kernel().clone(),
            var_mean: self.var_layer.mean_params().clone(),
            var_kernel: self.var_layer.kernel().clone(),
            lambda: self.lambda().to_vec(),
        }
    }
}
