use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::replication::{run_replication, FitStatus, Method, ReplicationResult};
use crate::error::{Error, Result};

/// Name of the quantile rule recorded next to every summary.
pub const QUANTILE_METHOD: &str = "linear interpolation between order statistics (type 7)";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub lower: f64,
    pub median: f64,
    pub upper: f64,
}

/// Type-7 sample quantile: linear interpolation at position `p (n - 1)` of the sorted data.
pub fn quantile(sorted: &[f64], p: f64) -> Option<f64> {
    if sorted.is_empty() || !(0.0..=1.0).contains(&p) {
        return None;
    }
    let h = p * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    Some(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}

impl Quartiles {
    /// Quartiles of the finite values; `None` when there are none.
    pub fn of(values: impl IntoIterator<Item = f64>) -> Option<Self> {
        let mut v: Vec<f64> = values.into_iter().filter(|x| x.is_finite()).collect();
        v.sort_by(f64::total_cmp);
        Some(Self {
            lower: quantile(&v, 0.25)?,
            median: quantile(&v, 0.5)?,
            upper: quantile(&v, 0.75)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub n_ok: usize,
    /// Replications whose fit or prediction failed; excluded from the quartiles.
    pub n_failed: usize,
    pub true_mse: Option<Quartiles>,
    pub mse: Option<Quartiles>,
    pub score: Option<Quartiles>,
}

impl MethodSummary {
    pub fn from_results(method: Method, results: &[ReplicationResult]) -> Option<Self> {
        let outcomes: Vec<_> = results.iter().filter_map(|r| r.outcome(method)).collect();
        if outcomes.is_empty() {
            return None;
        }
        let metrics: Vec<_> = outcomes.iter().filter_map(|o| o.metrics).collect();
        let n_failed = outcomes.iter().filter(|o| o.status == FitStatus::Failed).count();
        Some(Self {
            method,
            n_ok: metrics.len(),
            n_failed,
            true_mse: Quartiles::of(metrics.iter().filter_map(|m| m.true_mse)),
            mse: Quartiles::of(metrics.iter().map(|m| m.mse)),
            score: Quartiles::of(metrics.iter().map(|m| m.score)),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub quantile_method: String,
    pub per_replication: Vec<ReplicationResult>,
    pub summary: Vec<MethodSummary>,
}

impl ExperimentResult {
    pub fn from_replications(config: ExperimentConfig, per_replication: Vec<ReplicationResult>) -> Self {
        let summary = Method::ALL
            .iter()
            .filter_map(|&m| MethodSummary::from_results(m, &per_replication))
            .collect();
        Self {
            config,
            quantile_method: QUANTILE_METHOD.into(),
            per_replication,
            summary,
        }
    }

    pub fn method(&self, method: Method) -> Option<&MethodSummary> {
        self.summary.iter().find(|s| s.method == method)
    }
}

/// Runs every replication, `cfg.workers` at a time, and summarises them.
/// Results are independent of the worker count.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("worker pool: {e}")))?;
    let results = pool.install(|| {
        (0..cfg.replications)
            .into_par_iter()
            .map(|rep| {
                log::info!("replication {rep}/{}", cfg.replications);
                run_replication(cfg, rep).map_err(|e| Error::Replication {
                    rep,
                    source: Box::new(e),
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(ExperimentResult::from_replications(cfg.clone(), results))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment_harness::replication::MethodOutcome;
    use crate::metrics::MetricTriple;
    use crate::simulators::SimulatorId;
    use proptest::prelude::*;

    #[test]
    fn type7_quantiles() {
        let q = Quartiles::of([1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!((q.lower, q.median, q.upper), (1.75, 2.5, 3.25));
        let q = Quartiles::of([5.0]).unwrap();
        assert_eq!((q.lower, q.median, q.upper), (5.0, 5.0, 5.0));
        let q = Quartiles::of([3.0, 1.0, 2.0, f64::NAN]).unwrap();
        assert_eq!(q.median, 2.0);
        assert!(Quartiles::of([]).is_none());
        assert_eq!(quantile(&[0.0, 10.0], 0.3), Some(3.0));
    }

    fn outcome(method: Method, score: Option<f64>) -> MethodOutcome {
        MethodOutcome {
            method,
            status: if score.is_some() { FitStatus::Ok } else { FitStatus::Failed },
            error: score.is_none().then(|| "boom".into()),
            metrics: score.map(|s| MetricTriple {
                true_mse: None,
                mse: 1.0,
                score: s,
            }),
        }
    }

    #[test]
    fn failures_are_counted_and_excluded() {
        let results: Vec<_> = [Some(1.0), None, Some(3.0)]
            .into_iter()
            .enumerate()
            .map(|(rep, s)| ReplicationResult {
                rep,
                seed: 0,
                outcomes: vec![outcome(Method::HetGp, s)],
            })
            .collect();
        let s = MethodSummary::from_results(Method::HetGp, &results).unwrap();
        assert_eq!((s.n_ok, s.n_failed), (2, 1));
        assert_eq!(s.score.unwrap().median, 2.0);
        assert!(s.true_mse.is_none());
        assert!(MethodSummary::from_results(Method::DetHetGp, &results).is_none());
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let mut cfg = ExperimentConfig::new(SimulatorId::Toy1, 12, 4);
        cfg.n_test = 8;
        cfg.r_test = 3;
        cfg.replications = 3;
        cfg.lhs_candidates = 10;
        cfg.inference.restarts = 2;
        cfg.workers = 1;
        let a = run_experiment(&cfg).unwrap();
        cfg.workers = 3;
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(a.per_replication, b.per_replication);
        assert_eq!(a.summary, b.summary);
        assert_eq!(a.per_replication.iter().map(|r| r.rep).collect::<Vec<_>>(), vec![0, 1, 2]);
        assert_eq!(a.method(Method::DetHetGp).unwrap().n_ok + a.method(Method::DetHetGp).unwrap().n_failed, 3);
    }

    proptest! {
        #[test]
        fn quartiles_are_ordered_and_bounded(v in prop::collection::vec(-1e6..1e6f64, 1..50)) {
            let q = Quartiles::of(v.iter().copied()).unwrap();
            let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(lo <= q.lower && q.lower <= q.median && q.median <= q.upper && q.upper <= hi);
        }
    }
}
