//! Priors, log-posterior assembly and MAP optimization shared by every model fit.

pub mod lbfgs;
pub mod map;
pub mod objective;
pub mod priors;

use serde::{Deserialize, Serialize};

pub use lbfgs::{LbfgsConfig, Termination};
pub use map::{map_optimize, GradientMode, MapResult, OptimizerConfig, RestartReport};
pub use objective::{
    finite_difference_gradient, gaussian_loglik, GpObjective, HetGpObjective, LayerCodec,
    Objective, ParamLayout,
};
pub use priors::{log_prior, PriorSpec};

use crate::core_math::DEFAULT_NUGGET;

/// Lower bound on the deterministic layer's lengthscales inside the composite model.
pub const DEFAULT_DET_LENGTHSCALE_FLOOR: f64 = 0.05;

/// How the predicted intrinsic variance `δ²(x*)` is formed from the log-variance GP.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariancePlugin {
    /// `exp(μ)`, the latent predictive mean pushed through `exp`.
    #[default]
    Mode,
    /// `exp(μ + v/2)`, the lognormal mean.
    LognormalMean,
}

/// Every knob governing a model fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub restarts: usize,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub f_tol: f64,
    pub beta_prior_sd: f64,
    pub nugget: f64,
    pub det_lengthscale_floor: f64,
    /// Apply the lengthscale floor to the deterministic layer of the composite model.
    pub constrain_det_lengthscale: bool,
    pub gradient: GradientMode,
    pub variance_plugin: VariancePlugin,
    /// Add the deterministic layer's predictive variance at the stochastic inputs to
    /// the residual layer's noise.
    pub propagate_det_variance: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            restarts: 10,
            max_iters: 500,
            grad_tol: 1e-6,
            f_tol: LbfgsConfig::default().f_tol,
            beta_prior_sd: 10.0,
            nugget: DEFAULT_NUGGET,
            det_lengthscale_floor: DEFAULT_DET_LENGTHSCALE_FLOOR,
            constrain_det_lengthscale: true,
            gradient: GradientMode::Analytic,
            variance_plugin: VariancePlugin::Mode,
            propagate_det_variance: false,
        }
    }
}

impl FitConfig {
    pub fn prior(&self) -> PriorSpec {
        PriorSpec::with_beta_sd(self.beta_prior_sd)
    }

    pub fn optimizer(&self) -> OptimizerConfig {
        OptimizerConfig {
            restarts: self.restarts,
            lbfgs: LbfgsConfig {
                max_iters: self.max_iters,
                grad_tol: self.grad_tol,
                f_tol: self.f_tol,
                ..LbfgsConfig::default()
            },
            gradient: self.gradient,
        }
    }

    pub fn validate(&self) -> crate::Result<()> {
        let bad = |m: &str| Err(crate::Error::InvalidArgument(m.to_string()));
        if self.restarts == 0 {
            return bad("restarts must be >= 1");
        }
        if self.max_iters == 0 {
            return bad("max_iters must be >= 1");
        }
        if !(self.nugget >= 0.0 && self.nugget.is_finite()) {
            return bad("nugget must be non-negative");
        }
        if !(self.det_lengthscale_floor >= 0.0 && self.det_lengthscale_floor.is_finite()) {
            return bad("det_lengthscale_floor must be non-negative");
        }
        if !(self.grad_tol >= 0.0 && self.f_tol >= 0.0) {
            return bad("tolerances must be non-negative");
        }
        self.prior().validate()
    }
}
