use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::replication::ReplicationData;
use super::standardizer::Standardizer;
use crate::core_math::Matrix;
use crate::error::{Error, Result};
use crate::model_detgp::DetGpModel;
use crate::model_dethetgp::DetHetGpModel;
use crate::model_hetgp::HetGpModel;
use crate::predictive::PredictiveDistribution;
use crate::rng::derive_seed;
use crate::simulators::SimulatorId;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "model", rename_all = "snake_case")]
pub enum TrainedModel {
    #[serde(rename = "detgp")]
    DetGp(DetGpModel<f64>),
    #[serde(rename = "hetgp")]
    HetGp(HetGpModel<f64>),
    #[serde(rename = "dethetgp")]
    DetHetGp(DetHetGpModel<f64>),
}

impl TrainedModel {
    pub fn dim(&self) -> usize {
        match self {
            TrainedModel::DetGp(m) => m.dim(),
            TrainedModel::HetGp(m) => m.dim(),
            TrainedModel::DetHetGp(m) => m.dim(),
        }
    }

    /// Predictions on the scale the model was trained on.
    pub fn predict(&self, xstar: &Matrix<f64>) -> Result<PredictiveDistribution<f64>> {
        match self {
            TrainedModel::DetGp(m) => m.predict(xstar),
            TrainedModel::HetGp(m) => m.predict(xstar),
            TrainedModel::DetHetGp(m) => m.predict(xstar),
        }
    }
}

/// A trained emulator together with the output transform it was trained under.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub standardizer: Standardizer,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulator_id: Option<SimulatorId>,
    pub model: TrainedModel,
}

impl ModelFile {
    /// Predictive moments on the natural output scale.
    pub fn predict(&self, xstar: &Matrix<f64>) -> Result<PredictiveDistribution<f64>> {
        let p = self.model.predict(xstar)?;
        let s = &self.standardizer;
        Ok(PredictiveDistribution {
            mean: p.mean.iter().map(|&m| s.invert(m)).collect(),
            variance: p.variance.iter().map(|&v| s.invert_variance(v)).collect(),
            det_mean: p.det_mean.map(|d| d.iter().map(|&m| s.invert(m)).collect()),
        })
    }
}


#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "detgp")]
    DetGp,
    #[serde(rename = "hetgp")]
    HetGp,
    #[serde(rename = "dethetgp")]
    DetHetGp,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::DetGp, ModelKind::HetGp, ModelKind::DetHetGp];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::DetGp => "detgp",
            ModelKind::HetGp => "hetgp",
            ModelKind::DetHetGp => "dethetgp",
        }
    }

    /// Sub-seed of the replication's optimizer stream this kind is fit with.
    fn optimizer_slot(self) -> u64 {
        match self {
            ModelKind::HetGp => 0,
            ModelKind::DetHetGp => 1,
            ModelKind::DetGp => 2,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown model kind `{s}` (expected detgp, hetgp or dethetgp)")))
    }
}

/// Fits one emulator to a replication's standardized data exactly as the harness
/// does. A standalone DetGP is fit to the deterministic runs without the lengthscale floor.
pub fn fit_model(cfg: &ExperimentConfig, data: &ReplicationData, kind: ModelKind) -> Result<TrainedModel> {
    let s = &data.standardizer;
    let seed = derive_seed(data.optimizer_seed(), kind.optimizer_slot());
    let need_det = || {
        data.deterministic
            .as_ref()
            .zip(data.dethetgp_stochastic.as_ref())
            .ok_or_else(|| Error::InvalidArgument(format!("{kind} needs deterministic runs (n_det > 0)")))
    };
    Ok(match kind {
        ModelKind::HetGp => TrainedModel::HetGp(HetGpModel::fit(
            &data.hetgp.x,
            &data.hetgp.standardized(s),
            &cfg.inference,
            None,
            seed,
        )?),
        ModelKind::DetHetGp => {
            let (det, st) = need_det()?;
            TrainedModel::DetHetGp(DetHetGpModel::fit(
                &st.x,
                &st.standardized(s),
                &det.x,
                &det.standardized(s),
                &cfg.inference,
                seed,
            )?)
        }
        ModelKind::DetGp => {
            let (det, _) = need_det()?;
            TrainedModel::DetGp(DetGpModel::fit(&det.x, &det.standardized(s), &cfg.inference, false, seed)?)
        }
    })
}

/// Fitted model plus everything needed to use it on the natural scale.
pub fn fit_model_file(cfg: &ExperimentConfig, data: &ReplicationData, kind: ModelKind) -> Result<ModelFile> {
    Ok(ModelFile {
        standardizer: data.standardizer.clone(),
        simulator_id: Some(cfg.simulator_id),
        model: fit_model(cfg, data, kind)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment_harness::prepare_replication;

    #[test]
    fn kinds_parse() {
        for k in ModelKind::ALL {
            assert_eq!(k.as_str().parse::<ModelKind>().unwrap(), k);
        }
        assert!("gp".parse::<ModelKind>().is_err());
    }

    #[test]
    fn standalone_detgp_is_unconstrained_and_natural_scale_predictions_invert() {
        let mut cfg = ExperimentConfig::new(SimulatorId::Toy1, 15, 5);
        cfg.n_test = 3;
        cfg.r_test = 2;
        cfg.lhs_candidates = 10;
        cfg.inference.restarts = 2;
        let data = prepare_replication(&cfg, 0).unwrap();
        let file = fit_model_file(&cfg, &data, ModelKind::DetGp).unwrap();
        let TrainedModel::DetGp(m) = &file.model else { panic!() };
        assert!(m.lengthscale_floor().is_none());
        let det = data.deterministic.as_ref().unwrap();
        let p = file.predict(&det.x).unwrap();
        for (mu, y) in p.mean.iter().zip(&det.y) {
            assert!((mu - y).abs() < 1e-2 * data.standardizer.y_sd, "{mu} vs {y}");
        }
        let none = ExperimentConfig::new(SimulatorId::Toy1, 15, 0);
        let data = prepare_replication(&none, 0).unwrap();
        assert!(fit_model(&none, &data, ModelKind::DetHetGp).is_err());
    }
}
