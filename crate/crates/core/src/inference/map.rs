//! Multi-start MAP optimization.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::lbfgs::{minimize, LbfgsConfig, Termination};
use super::objective::{finite_difference_gradient, Objective};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from};
use crate::scalar::Real;

/// Source of the gradient used by the optimizer.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientMode {
    #[default]
    Analytic,
    /// Central differences on the unconstrained scale.
    FiniteDifference,
}

/// Step used by [`GradientMode::FiniteDifference`].
pub const FD_STEP: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub restarts: usize,
    pub lbfgs: LbfgsConfig,
    pub gradient: GradientMode,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            restarts: 10,
            lbfgs: LbfgsConfig::default(),
            gradient: GradientMode::Analytic,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RestartReport {
    pub index: usize,
    pub initial_log_posterior: f64,
    pub log_posterior: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub grad_inf_norm: f64,
    pub termination: Termination,
}

impl RestartReport {
    pub fn converged(&self) -> bool {
        matches!(
            self.termination,
            Termination::GradientTolerance | Termination::FunctionTolerance
        )
    }
}

#[derive(Clone, Debug)]
pub struct MapResult<T> {
    pub theta: Vec<T>,
    pub log_posterior: T,
    pub best_restart: usize,
    pub restarts: Vec<RestartReport>,
}

/// Maximizes `obj` from `cfg.restarts` prior-drawn starting points.
///
/// Restart `r` draws its start from `derive_seed(seed, r)`. The best finite log
/// posterior wins, ties going to the lowest restart index.
pub fn map_optimize<T: Real, O: Objective<T>>(
    obj: &O,
    cfg: &OptimizerConfig,
    seed: u64,
) -> Result<MapResult<T>> {
    if cfg.restarts == 0 {
        return Err(Error::InvalidArgument("restarts must be >= 1".into()));
    }
    let runs: Vec<(Vec<T>, T, RestartReport)> = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng_from(derive_seed(seed, r as u64));
            let x0 = obj.initial_point(&mut rng);
            let initial = obj.log_posterior(&x0);
            let negated = |theta: &[T]| -> Option<(T, Vec<T>)> {
                match cfg.gradient {
                    GradientMode::Analytic => obj.log_posterior_with_gradient(theta),
                    GradientMode::FiniteDifference => {
                        let v = obj.log_posterior(theta);
                        if !v.is_finite() {
                            return None;
                        }
                        finite_difference_gradient(obj, theta, T::lit(FD_STEP)).map(|g| (v, g))
                    }
                }
                .map(|(v, g)| (-v, g.into_iter().map(|x| -x).collect()))
            };
            let rep = minimize(negated, x0, &cfg.lbfgs);
            let lp = -rep.f;
            let report = RestartReport {
                index: r,
                initial_log_posterior: initial.as_f64(),
                log_posterior: lp.as_f64(),
                iterations: rep.iterations,
                evaluations: rep.evaluations,
                grad_inf_norm: rep.grad_inf_norm.as_f64(),
                termination: rep.termination,
            };
            log::debug!(
                "restart {r}: log posterior {:.6} after {} iterations ({:?})",
                report.log_posterior,
                report.iterations,
                report.termination
            );
            (rep.x, lp, report)
        })
        .collect();

    let mut best: Option<usize> = None;
    for (i, (_, lp, rep)) in runs.iter().enumerate() {
        if !rep.termination.is_usable() || !lp.is_finite() {
            continue;
        }
        if best.map_or(true, |b| *lp > runs[b].1) {
            best = Some(i);
        }
    }
    let reports: Vec<RestartReport> = runs.iter().map(|(_, _, r)| r.clone()).collect();
    let Some(b) = best else {
        return Err(Error::OptimizationFailed(format!(
            "{} restarts, none with a finite log posterior",
            cfg.restarts
        )));
    };
    let (theta, lp, _) = runs.into_iter().nth(b).expect("index in range");
    Ok(MapResult {
        theta,
        log_posterior: lp,
        best_restart: b,
        restarts: reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::objective::ParamLayout;
    use crate::inference::priors::PriorSpec;
    use crate::rng::SimRng;

    struct Quadratic {
        layout: ParamLayout,
    }

    impl Objective<f64> for Quadratic {
        fn layout(&self) -> &ParamLayout {
            &self.layout
        }
        fn log_posterior(&self, t: &[f64]) -> f64 {
            -(t[0] - 3.0).powi(2)
        }
        fn log_posterior_with_gradient(&self, t: &[f64]) -> Option<(f64, Vec<f64>)> {
            Some((self.log_posterior(t), vec![-2.0 * (t[0] - 3.0)]))
        }
        fn initial_point(&self, rng: &mut SimRng) -> Vec<f64> {
            use rand::Rng;
            vec![rng.random_range(-10.0..10.0)]
        }
    }

    /// Gamma(4, 4) prior alone on a lengthscale, optimized over u = log l.
    struct PriorOnly {
        layout: ParamLayout,
        spec: PriorSpec,
    }

    impl Objective<f64> for PriorOnly {
        fn layout(&self) -> &ParamLayout {
            &self.layout
        }
        fn log_posterior(&self, t: &[f64]) -> f64 {
            self.spec.log_gamma_lengthscale(t[0].exp())
        }
        fn log_posterior_with_gradient(&self, t: &[f64]) -> Option<(f64, Vec<f64>)> {
            Some((
                self.log_posterior(t),
                vec![self.spec.d_log_gamma_lengthscale_dlog(t[0].exp())],
            ))
        }
        fn initial_point(&self, rng: &mut SimRng) -> Vec<f64> {
            vec![self.spec.sample_lengthscale(rng).ln()]
        }
    }

    fn one_param() -> ParamLayout {
        ParamLayout {
            slices: vec![("theta".into(), 0..1)],
        }
    }

    #[test]
    fn quadratic_optimum() {
        let obj = Quadratic { layout: one_param() };
        let r = map_optimize(&obj, &OptimizerConfig::default(), 7).unwrap();
        assert!((r.theta[0] - 3.0).abs() < 1e-6);
        assert_eq!(r.restarts.len(), 10);
        for rep in &r.restarts {
            assert!(r.log_posterior.as_f64() >= rep.initial_log_posterior);
        }
    }

    #[test]
    fn prior_mode_of_gamma_lengthscale() {
        let obj = PriorOnly {
            layout: one_param(),
            spec: PriorSpec::default(),
        };
        let r = map_optimize(&obj, &OptimizerConfig::default(), 1).unwrap();
        // mode (k - 1) / rate on the natural scale, no Jacobian
        assert!((r.theta[0].exp() - 0.75).abs() < 1e-6);
    }

    #[test]
    fn finite_difference_mode_agrees() {
        let obj = PriorOnly {
            layout: one_param(),
            spec: PriorSpec::default(),
        };
        let cfg = OptimizerConfig {
            gradient: GradientMode::FiniteDifference,
            ..OptimizerConfig::default()
        };
        let r = map_optimize(&obj, &cfg, 1).unwrap();
        assert!((r.theta[0].exp() - 0.75).abs() < 1e-5);
    }

    #[test]
    fn deterministic_given_seed() {
        let obj = Quadratic { layout: one_param() };
        let cfg = OptimizerConfig {
            restarts: 2,
            ..OptimizerConfig::default()
        };
        let a = map_optimize(&obj, &cfg, 99).unwrap();
        let b = map_optimize(&obj, &cfg, 99).unwrap();
        assert_eq!(a.theta, b.theta);
        assert_eq!(a.restarts, b.restarts);
    }

    #[test]
    fn all_restarts_failing_is_an_error() {
        struct Broken(ParamLayout);
        impl Objective<f64> for Broken {
            fn layout(&self) -> &ParamLayout {
                &self.0
            }
            fn log_posterior(&self, _: &[f64]) -> f64 {
                f64::NEG_INFINITY
            }
            fn log_posterior_with_gradient(&self, _: &[f64]) -> Option<(f64, Vec<f64>)> {
                None
            }
            fn initial_point(&self, _: &mut SimRng) -> Vec<f64> {
                vec![0.0]
            }
        }
        let r = map_optimize(&Broken(one_param()), &OptimizerConfig::default(), 0);
        assert!(matches!(r, Err(Error::OptimizationFailed(_))));
        let zero = OptimizerConfig {
            restarts: 0,
            ..OptimizerConfig::default()
        };
        assert!(map_optimize(&Quadratic { layout: one_param() }, &zero, 0).is_err());
    }
}
