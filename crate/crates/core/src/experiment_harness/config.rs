use serde::{Deserialize, Serialize};

use crate::design_lhs::DEFAULT_LHS_CANDIDATES;
use crate::error::{Error, Result};
use crate::inference::FitConfig;
use crate::model_hetgp::MIN_HETGP_POINTS;
use crate::simulators::{SimulatorId, SirParams};

/// Which stochastic runs the output standardizer is computed from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Standardization {
    /// The stochastic runs used to fit the HetGP arm.
    #[default]
    StochasticFitSet,
    /// The stochastic runs both arms share; requires `hetgp_design = reuse_dethetgp`.
    SharedSubset,
}

/// How the HetGP arm's training design relates to the DetHetGP arm's.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HetGpDesign {
    /// Its own maximin design of `n_total` stochastic points.
    #[default]
    Independent,
    /// DetHetGP's stochastic runs plus stochastic runs at the deterministic coordinates.
    ReuseDethetgp,
}

fn default_n_test() -> usize {
    100
}

fn default_r_test() -> usize {
    1000
}

fn default_replications() -> usize {
    100
}

fn default_lhs_candidates() -> usize {
    DEFAULT_LHS_CANDIDATES
}

/// One comparative experiment: simulator, budget split, test protocol and fit settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub simulator_id: SimulatorId,
    /// Input dimension; checked against the simulator when given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    /// Training runs per method.
    pub n_total: usize,
    /// Deterministic runs in the DetHetGP budget; 0 runs HetGP alone.
    pub n_det: usize,
    #[serde(default = "default_n_test")]
    pub n_test: usize,
    /// Simulator draws per test coordinate.
    #[serde(default = "default_r_test")]
    pub r_test: usize,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub standardization: Standardization,
    #[serde(default)]
    pub hetgp_design: HetGpDesign,
    /// Random Latin hypercubes scored per maximin design.
    #[serde(default = "default_lhs_candidates")]
    pub lhs_candidates: usize,
    /// Replications run concurrently; 0 uses every available core.
    #[serde(default)]
    pub workers: usize,
    #[serde(default)]
    pub sir: SirParams,
    #[serde(default)]
    pub inference: FitConfig,
}

impl ExperimentConfig {
    pub fn new(simulator_id: SimulatorId, n_total: usize, n_det: usize) -> Self {
        Self {
            simulator_id,
            d: None,
            n_total,
            n_det,
            n_test: default_n_test(),
            r_test: default_r_test(),
            replications: default_replications(),
            seed: 0,
            standardization: Standardization::default(),
            hetgp_design: HetGpDesign::default(),
            lhs_candidates: default_lhs_candidates(),
            workers: 0,
            sir: SirParams::default(),
            inference: FitConfig::default(),
        }
    }

    pub fn dim(&self) -> usize {
        self.simulator_id.dim()
    }

    /// Stochastic runs in the DetHetGP arm.
    pub fn n_stochastic(&self) -> usize {
        self.n_total - self.n_det
    }

    pub fn runs_dethetgp(&self) -> bool {
        self.n_det > 0
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if let Some(d) = self.d {
            if d != self.dim() {
                return bad(format!(
                    "d = {d} but simulator {} has {} inputs",
                    self.simulator_id,
                    self.dim()
                ));
            }
        }
        if self.n_det >= self.n_total {
            return bad(format!(
                "n_det ({}) must be below n_total ({})",
                self.n_det, self.n_total
            ));
        }
        if self.n_total < MIN_HETGP_POINTS {
            return bad(format!("n_total must be at least {MIN_HETGP_POINTS}"));
        }
        if self.runs_dethetgp() && self.n_stochastic() < MIN_HETGP_POINTS {
            return bad(format!(
                "the DetHetGP arm needs at least {MIN_HETGP_POINTS} stochastic runs, has {}",
                self.n_stochastic()
            ));
        }
        if self.runs_dethetgp() && self.n_det < 2 {
            return bad("n_det must be 0 or at least 2".into());
        }
        if self.n_test == 0 || self.r_test == 0 || self.replications == 0 {
            return bad("n_test, r_test and replications must be at least 1".into());
        }
        if self.lhs_candidates == 0 {
            return bad("lhs_candidates must be at least 1".into());
        }
        if self.standardization == Standardization::SharedSubset
            && (self.hetgp_design != HetGpDesign::ReuseDethetgp || !self.runs_dethetgp())
        {
            return bad("standardization = shared_subset needs hetgp_design = reuse_dethetgp and n_det > 0".into());
        }
        if self.simulator_id == SimulatorId::Sir {
            self.sir.validate()?;
        }
        self.inference.validate()
    }
}
