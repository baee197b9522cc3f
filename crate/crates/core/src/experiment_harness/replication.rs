use std::fmt;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, HetGpDesign, Standardization};
use super::standardizer::Standardizer;
use super::trained::{fit_model, ModelKind, TrainedModel};
use crate::core_math::Matrix;
use crate::design_lhs::maximin_lhs;
use crate::error::{Error, Result};
use crate::metrics::{metric_triple, MetricTriple};
use crate::predictive::PredictiveDistribution;
use crate::rng::{derive_seed, rng_from};
use crate::simulators::Simulator;

/// Independent seed streams of one replication.
mod stream {
    pub const DESIGN: u64 = 1;
    pub const TRAIN: u64 = 2;
    pub const TEST_DESIGN: u64 = 3;
    pub const TEST_DRAWS: u64 = 4;
    pub const OPTIMIZER: u64 = 5;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "hetgp")]
    HetGp,
    #[serde(rename = "dethetgp")]
    DetHetGp,
}

impl Method {
    pub const ALL: [Method; 2] = [Method::HetGp, Method::DetHetGp];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::HetGp => "hetgp",
            Method::DetHetGp => "dethetgp",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Training inputs and outputs on the natural scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub x: Matrix<f64>,
    pub y: Vec<f64>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn standardized(&self, s: &Standardizer) -> Vec<f64> {
        s.apply_all(&self.y)
    }
}

/// Every simulator output one replication needs, plus the shared standardizer.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplicationData {
    pub rep: usize,
    pub seed: u64,
    pub hetgp: Dataset,
    /// DetHetGP's stochastic runs, absent when `n_det = 0`.
    pub dethetgp_stochastic: Option<Dataset>,
    pub deterministic: Option<Dataset>,
    pub test_x: Matrix<f64>,
    /// `r_test × n_test` simulator draws at the test coordinates.
    pub test_draws: Matrix<f64>,
    pub true_means: Option<Vec<f64>>,
    /// The single standardizer both methods are fit and scored with.
    pub standardizer: Standardizer,
}

impl ReplicationData {
    /// Root of the optimizer seeds; independent of every data stream.
    pub fn optimizer_seed(&self) -> u64 {
        derive_seed(self.seed, stream::OPTIMIZER)
    }
}

pub fn replication_seed(cfg: &ExperimentConfig, rep: usize) -> u64 {
    derive_seed(cfg.seed, rep as u64)
}

fn stochastic_runs(sim: &Simulator, x: &Matrix<f64>, seed: u64) -> Result<Vec<f64>> {
    let mut rng = rng_from(seed);
    x.rows_iter()
        .map(|r| sim.run(r, &mut rng).map(|o| o.value))
        .collect()
}

fn design(cfg: &ExperimentConfig, n: usize, seed: u64) -> Result<Matrix<f64>> {
    Ok(maximin_lhs::<f64>(n, cfg.dim(), seed, cfg.lhs_candidates)?.points)
}

/// Draws the designs, runs the simulators and builds the standardizer.
pub fn prepare_replication(cfg: &ExperimentConfig, rep: usize) -> Result<ReplicationData> {
    let sim = Simulator::with_sir_params(cfg.simulator_id, cfg.sir);
    let seed = replication_seed(cfg, rep);
    let design_seed = derive_seed(seed, stream::DESIGN);
    let train_seed = derive_seed(seed, stream::TRAIN);

    let (dethetgp_stochastic, deterministic) = if cfg.runs_dethetgp() {
        let xs = design(cfg, cfg.n_stochastic(), derive_seed(design_seed, 1))?;
        let ys = stochastic_runs(&sim, &xs, derive_seed(train_seed, 1))?;
        let xd = design(cfg, cfg.n_det, derive_seed(design_seed, 2))?;
        let yd = xd
            .rows_iter()
            .map(|r| sim.run_deterministic(r).map(|o| o.value))
            .collect::<Result<Vec<_>>>()?;
        (Some(Dataset { x: xs, y: ys }), Some(Dataset { x: xd, y: yd }))
    } else {
        (None, None)
    };

    let hetgp = match (cfg.hetgp_design, &dethetgp_stochastic, &deterministic) {
        (HetGpDesign::ReuseDethetgp, Some(shared), Some(det)) => {
            let extra = stochastic_runs(&sim, &det.x, derive_seed(train_seed, 2))?;
            let mut y = shared.y.clone();
            y.extend(extra);
            Dataset {
                x: shared.x.vstack(&det.x)?,
                y,
            }
        }
        _ => {
            let x = design(cfg, cfg.n_total, derive_seed(design_seed, 0))?;
            let y = stochastic_runs(&sim, &x, derive_seed(train_seed, 0))?;
            Dataset { x, y }
        }
    };

    let standardizer = match cfg.standardization {
        Standardization::StochasticFitSet => Standardizer::fit(
            &hetgp.y,
            format!("HetGP stochastic fit set ({} runs)", hetgp.len()),
        )?,
        Standardization::SharedSubset => {
            let shared = dethetgp_stochastic
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument("shared_subset needs n_det > 0".into()))?;
            Standardizer::fit(
                &shared.y,
                format!("shared stochastic runs ({} runs)", shared.len()),
            )?
        }
    };

    let test_x = design(cfg, cfg.n_test, derive_seed(seed, stream::TEST_DESIGN))?;
    let draws_seed = derive_seed(seed, stream::TEST_DRAWS);
    let mut test_draws = Matrix::zeros(cfg.r_test, cfg.n_test);
    for (j, point) in test_x.rows_iter().enumerate() {
        let mut rng = rng_from(derive_seed(draws_seed, j as u64));
        for r in 0..cfg.r_test {
            test_draws[(r, j)] = sim.run(point, &mut rng)?.value;
        }
    }
    let true_means = if sim.has_true_moments() {
        Some(
            test_x
                .rows_iter()
                .map(|p| Ok(sim.true_moments(p)?.map_or(f64::NAN, |m| m.mean)))
                .collect::<Result<Vec<_>>>()?,
        )
    } else {
        None
    };

    Ok(ReplicationData {
        rep,
        seed,
        hetgp,
        dethetgp_stochastic,
        deterministic,
        test_x,
        test_draws,
        true_means,
        standardizer,
    })
}

/// Models fitted in one replication, on the standardized scale.
#[derive(Debug)]
pub struct FittedReplication {
    pub hetgp: Result<TrainedModel>,
    pub dethetgp: Option<Result<TrainedModel>>,
}

pub fn fit_replication(cfg: &ExperimentConfig, data: &ReplicationData) -> FittedReplication {
    FittedReplication {
        hetgp: fit_model(cfg, data, ModelKind::HetGp),
        dethetgp: cfg
            .runs_dethetgp()
            .then(|| fit_model(cfg, data, ModelKind::DetHetGp)),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitStatus {
    Ok,
    Failed,
}

impl FitStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            FitStatus::Ok => "ok",
            FitStatus::Failed => "failed",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodOutcome {
    pub method: Method,
    pub status: FitStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricTriple>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicationResult {
    pub rep: usize,
    pub seed: u64,
    pub outcomes: Vec<MethodOutcome>,
}

impl ReplicationResult {
    pub fn outcome(&self, method: Method) -> Option<&MethodOutcome> {
        self.outcomes.iter().find(|o| o.method == method)
    }
}

/// Metrics of standardized-scale predictions against the standardized test draws.
pub fn evaluate(data: &ReplicationData, pred: &PredictiveDistribution<f64>) -> Result<MetricTriple> {
    let s = &data.standardizer;
    let draws = data.test_draws.map(|v| s.apply(v));
    let truth = data.true_means.as_ref().map(|t| s.apply_all(t));
    metric_triple(&pred.mean, &pred.floored_variance(), truth.as_deref(), &draws)
}

fn outcome(
    method: Method,
    data: &ReplicationData,
    predicted: Result<PredictiveDistribution<f64>>,
) -> MethodOutcome {
    match predicted.and_then(|p| evaluate(data, &p)) {
        Ok(m) => MethodOutcome {
            method,
            status: FitStatus::Ok,
            error: None,
            metrics: Some(m),
        },
        Err(e) => {
            log::warn!("replication {}: {method} failed: {e}", data.rep);
            MethodOutcome {
                method,
                status: FitStatus::Failed,
                error: Some(e.to_string()),
                metrics: None,
            }
        }
    }
}

/// Scores fitted models on the replication's shared test set.
pub fn score_replication(data: &ReplicationData, fitted: &FittedReplication) -> ReplicationResult {
    let mut outcomes = vec![outcome(
        Method::HetGp,
        data,
        fitted
            .hetgp
            .as_ref()
            .map_err(|e| Error::Fit(e.to_string()))
            .and_then(|m| m.predict(&data.test_x)),
    )];
    if let Some(d) = &fitted.dethetgp {
        outcomes.push(outcome(
            Method::DetHetGp,
            data,
            d.as_ref()
                .map_err(|e| Error::Fit(e.to_string()))
                .and_then(|m| m.predict(&data.test_x)),
        ));
    }
    ReplicationResult {
        rep: data.rep,
        seed: data.seed,
        outcomes,
    }
}

/// One full replication: data, both fits, metrics. Fit failures are recorded in
/// the result; only data-generation problems are errors.
pub fn run_replication(cfg: &ExperimentConfig, rep: usize) -> Result<ReplicationResult> {
    let data = prepare_replication(cfg, rep)?;
    let fitted = fit_replication(cfg, &data);
    Ok(score_replication(&data, &fitted))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulators::SimulatorId;

    fn small(sim: SimulatorId, n_total: usize, n_det: usize) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(sim, n_total, n_det);
        cfg.n_test = 10;
        cfg.r_test = 5;
        cfg.replications = 2;
        cfg.lhs_candidates = 20;
        cfg.inference.restarts = 2;
        cfg
    }

    #[test]
    fn independent_designs_have_the_configured_sizes() {
        let cfg = small(SimulatorId::Toy1, 20, 6);
        let d = prepare_replication(&cfg, 0).unwrap();
        assert_eq!(d.hetgp.len(), 20);
        assert_eq!(d.dethetgp_stochastic.as_ref().unwrap().len(), 14);
        assert_eq!(d.deterministic.as_ref().unwrap().len(), 6);
        assert_eq!((d.test_draws.nrows(), d.test_draws.ncols()), (5, 10));
        assert_eq!(d.true_means.as_ref().unwrap().len(), 10);
        let expected = Standardizer::fit(&d.hetgp.y, "").unwrap();
        assert_eq!((d.standardizer.y_mean, d.standardizer.y_sd), (expected.y_mean, expected.y_sd));
    }

    #[test]
    fn reuse_design_shares_stochastic_runs() {
        let mut cfg = small(SimulatorId::Goldberg2d, 20, 6);
        cfg.hetgp_design = HetGpDesign::ReuseDethetgp;
        let d = prepare_replication(&cfg, 1).unwrap();
        let shared = d.dethetgp_stochastic.as_ref().unwrap();
        let det = d.deterministic.as_ref().unwrap();
        assert_eq!(d.hetgp.len(), 20);
        assert_eq!(&d.hetgp.y[..14], shared.y.as_slice());
        for i in 0..6 {
            assert_eq!(d.hetgp.x.row(14 + i), det.x.row(i));
            // stochastic runs at the deterministic coordinates differ from the det runs
            assert_ne!(d.hetgp.y[14 + i], det.y[i]);
        }
        cfg.standardization = Standardization::SharedSubset;
        let d = prepare_replication(&cfg, 1).unwrap();
        let expected = Standardizer::fit(&d.dethetgp_stochastic.as_ref().unwrap().y, "").unwrap();
        assert_eq!(d.standardizer.y_mean, expected.y_mean);
    }

    #[test]
    fn test_stream_independent_of_training_budget() {
        let a = prepare_replication(&small(SimulatorId::Toy1, 20, 6), 3).unwrap();
        let b = prepare_replication(&small(SimulatorId::Toy1, 30, 10), 3).unwrap();
        assert_eq!(a.test_x, b.test_x);
        assert_eq!(a.test_draws, b.test_draws);
        assert_ne!(a.hetgp.y, b.hetgp.y);
    }

    #[test]
    fn replication_is_deterministic() {
        let cfg = small(SimulatorId::Binois, 15, 5);
        let a = run_replication(&cfg, 0).unwrap();
        let b = run_replication(&cfg, 0).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.outcomes.len(), 2);
        assert!(a.outcomes.iter().all(|o| o.status == FitStatus::Ok));
    }

    #[test]
    fn no_deterministic_runs_means_hetgp_only() {
        let cfg = small(SimulatorId::Toy1, 12, 0);
        let r = run_replication(&cfg, 0).unwrap();
        assert_eq!(r.outcomes.len(), 1);
        assert_eq!(r.outcomes[0].method, Method::HetGp);
    }

    #[test]
    fn sir_has_no_true_mse() {
        let mut cfg = small(SimulatorId::Sir, 12, 4);
        cfg.n_test = 4;
        cfg.r_test = 1;
        let r = run_replication(&cfg, 0).unwrap();
        for o in &r.outcomes {
            assert_eq!(o.status, FitStatus::Ok, "{:?}", o.error);
            assert!(o.metrics.unwrap().true_mse.is_none());
        }
    }
}
