//! Stochastic toy simulators, an individual-contact SIR model, and their
//! deterministic approximations.
//!
//! Every simulator takes inputs on the unit hypercube. The toy simulators expose
//! their analytic mean and standard deviation; the SIR pair does not.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use std::f64::consts::PI;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimOutput {
    pub value: f64,
    pub was_deterministic: bool,
}

impl SimOutput {
    fn new(value: f64, was_deterministic: bool) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::NonFinite("simulator output"));
        }
        Ok(Self {
            value,
            was_deterministic,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrueMoments {
    pub mean: f64,
    pub sd: f64,
}

fn check_unit(x: &[f64], d: usize) -> Result<()> {
    if x.len() != d {
        return Err(Error::DimensionMismatch {
            context: "simulator input",
            expected: d,
            actual: x.len(),
        });
    }
    for (dim, &v) in x.iter().enumerate() {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::OutOfRange { dim, value: v });
        }
    }
    Ok(())
}

fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

// toy1: (1 - x) sin(π + 6πx) + log(0.2 + x) + (1.2 - x) ε

fn toy1_mean(x: f64) -> f64 {
    (1.0 - x) * (PI + 6.0 * PI * x).sin() + (0.2 + x).ln()
}

fn toy1_sd(x: f64) -> f64 {
    (1.2 - x).abs()
}

/// Toy simulator evaluated with an explicit noise value.
pub fn toy1_with_noise(x: f64, eps: f64) -> Result<SimOutput> {
    check_unit(&[x], 1)?;
    SimOutput::new(toy1_mean(x) + (1.2 - x) * eps, false)
}

pub fn toy1<R: Rng + ?Sized>(x: f64, rng: &mut R) -> Result<SimOutput> {
    check_unit(&[x], 1)?;
    toy1_with_noise(x, std_normal(rng))
}

/// Deterministic approximation of [`toy1`]: the noise draw is fixed at 1.
pub fn toy1_det(x: f64) -> Result<SimOutput> {
    let mut out = toy1_with_noise(x, 1.0)?;
    out.was_deterministic = true;
    Ok(out)
}

// goldberg2d: 2 sin(2πx₁) + 2 sin(2πx₂) + (0.5 + x₁) ε₁ + (0.5 + x₂) ε₂

fn goldberg_mean(x1: f64, x2: f64) -> f64 {
    2.0 * (2.0 * PI * x1).sin() + 2.0 * (2.0 * PI * x2).sin()
}

pub fn goldberg2d_with_noise(x1: f64, x2: f64, eps1: f64, eps2: f64) -> Result<SimOutput> {
    check_unit(&[x1, x2], 2)?;
    SimOutput::new(
        goldberg_mean(x1, x2) + (0.5 + x1) * eps1 + (0.5 + x2) * eps2,
        false,
    )
}

pub fn toy_goldberg2d<R: Rng + ?Sized>(x1: f64, x2: f64, rng: &mut R) -> Result<SimOutput> {
    check_unit(&[x1, x2], 2)?;
    let e1 = std_normal(rng);
    let e2 = std_normal(rng);
    goldberg2d_with_noise(x1, x2, e1, e2)
}

/// Deterministic approximation: ε₁ fixed at 0.5 and ε₂ at -0.5.
pub fn toy_goldberg2d_det(x1: f64, x2: f64) -> Result<SimOutput> {
    let mut out = goldberg2d_with_noise(x1, x2, 0.5, -0.5)?;
    out.was_deterministic = true;
    Ok(out)
}

// binois: (6x - 2)² sin(12x - 4) + (1.1 + sin(2πx)) ε

fn binois_mean(x: f64) -> f64 {
    (6.0 * x - 2.0).powi(2) * (12.0 * x - 4.0).sin()
}

pub fn binois_with_noise(x: f64, eps: f64) -> Result<SimOutput> {
    check_unit(&[x], 1)?;
    SimOutput::new(binois_mean(x) + (1.1 + (2.0 * PI * x).sin()) * eps, false)
}

pub fn toy_binois<R: Rng + ?Sized>(x: f64, rng: &mut R) -> Result<SimOutput> {
    check_unit(&[x], 1)?;
    binois_with_noise(x, std_normal(rng))
}

/// Deterministic approximation: ε fixed at 1.
pub fn toy_binois_det(x: f64) -> Result<SimOutput> {
    let mut out = binois_with_noise(x, 1.0)?;
    out.was_deterministic = true;
    Ok(out)
}

/// How the contact rate scales with population size.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActScaling {
    /// Every ordered (infected, other) pair makes contact with probability `act_rate`
    /// per step, i.e. `act_rate · (pop - 1)` expected contacts per infected individual.
    #[default]
    PerPair,
    /// Every infected individual makes `act_rate` expected contacts per step.
    PerCapita,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SirParams {
    pub act_rate: f64,
    pub inf_prob: f64,
    pub rec_rate: f64,
    pub pop: u32,
    pub init_infected: u32,
    pub steps: u32,
    pub act_scaling: ActScaling,
}

impl Default for SirParams {
    fn default() -> Self {
        Self {
            act_rate: 0.01,
            inf_prob: 0.75,
            rec_rate: 0.005,
            pop: 1000,
            init_infected: 5,
            steps: 300,
            act_scaling: ActScaling::PerPair,
        }
    }
}

impl SirParams {
    pub const INF_PROB_RANGE: (f64, f64) = (0.5, 1.0);
    pub const REC_RATE_RANGE: (f64, f64) = (0.0, 0.01);

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(0.0..=1.0).contains(&self.inf_prob) {
            return bad(format!("inf_prob {} outside [0, 1]", self.inf_prob));
        }
        if !(0.0..=1.0).contains(&self.rec_rate) {
            return bad(format!("rec_rate {} outside [0, 1]", self.rec_rate));
        }
        if !(self.act_rate >= 0.0 && self.act_rate.is_finite()) {
            return bad(format!("act_rate {} must be non-negative", self.act_rate));
        }
        if self.pop < 2 {
            return bad("population must be at least 2".into());
        }
        if self.init_infected > self.pop {
            return bad(format!(
                "init_infected {} exceeds population {}",
                self.init_infected, self.pop
            ));
        }
        if self.contact_prob() > 1.0 {
            return bad(format!(
                "pairwise contact probability {} exceeds 1",
                self.contact_prob()
            ));
        }
        Ok(())
    }

    /// Maps a unit-square input `(x₁, x₂)` to infection probability in [0.5, 1]
    /// and recovery rate in [0, 0.01], keeping the other fields.
    pub fn with_unit_inputs(&self, x: &[f64]) -> Result<Self> {
        check_unit(x, 2)?;
        let (p0, p1) = Self::INF_PROB_RANGE;
        let (r0, r1) = Self::REC_RATE_RANGE;
        Ok(Self {
            inf_prob: p0 + (p1 - p0) * x[0],
            rec_rate: r0 + (r1 - r0) * x[1],
            ..*self
        })
    }

    /// Per-step probability that a given infected individual contacts a given other individual.
    pub fn contact_prob(&self) -> f64 {
        match self.act_scaling {
            ActScaling::PerPair => self.act_rate,
            ActScaling::PerCapita => self.act_rate / f64::from(self.pop - 1),
        }
    }

    /// Probability that one susceptible escapes infection for a step with `infected` infectives.
    fn escape_prob(&self, infected: f64) -> f64 {
        (1.0 - self.contact_prob() * self.inf_prob).powf(infected)
    }
}

/// Individual contact SIR simulation; returns the infected proportion after `steps` steps.
///
/// Each infected individual makes Binomial(pop - 1, q) contacts per step with
/// distinct, uniformly chosen partners, where `q` is [`SirParams::contact_prob`].
/// That is the same as every (infected, other) pair meeting independently with
/// probability `q`, so each susceptible is infected independently with
/// probability `1 - (1 - q·inf_prob)^I`. Infections and recoveries are both
/// decided from the state at the start of the step.
pub fn sir_icm<R: Rng + ?Sized>(p: &SirParams, rng: &mut R) -> Result<SimOutput> {
    p.validate()?;
    #[derive(Clone, Copy, PartialEq)]
    enum State {
        S,
        I,
        R,
    }
    let pop = p.pop as usize;
    let mut state = vec![State::S; pop];
    for s in state.iter_mut().take(p.init_infected as usize) {
        *s = State::I;
    }
    let mut infected = p.init_infected as usize;
    for _ in 0..p.steps {
        if infected == 0 {
            break;
        }
        let infect_prob = 1.0 - p.escape_prob(infected as f64);
        let mut next_infected = infected;
        for s in state.iter_mut() {
            match *s {
                State::S => {
                    if infect_prob > 0.0 && rng.random::<f64>() < infect_prob {
                        *s = State::I;
                        next_infected += 1;
                    }
                }
                State::I => {
                    if p.rec_rate > 0.0 && rng.random::<f64>() < p.rec_rate {
                        *s = State::R;
                        next_infected -= 1;
                    }
                }
                State::R => {}
            }
        }
        // one visit per individual, so this step's new infections cannot recover until the next
        infected = next_infected;
    }
    SimOutput::new(infected as f64 / pop as f64, false)
}

/// Compartment sizes of the deterministic SIR model after each step, starting with step 0.
pub fn sir_dcm_trajectory(p: &SirParams) -> Result<Vec<[f64; 3]>> {
    p.validate()?;
    let n = f64::from(p.pop);
    let mut i = f64::from(p.init_infected);
    let mut s = n - i;
    let mut r = 0.0;
    let mut out = Vec::with_capacity(p.steps as usize + 1);
    out.push([s, i, r]);
    for _ in 0..p.steps {
        let new_inf = s * (1.0 - p.escape_prob(i));
        let new_rec = p.rec_rate * i;
        s -= new_inf;
        i += new_inf - new_rec;
        r += new_rec;
        out.push([s, i, r]);
    }
    Ok(out)
}

/// Deterministic compartmental counterpart of [`sir_icm`] using the same per-step
/// expected infection and recovery rates.
pub fn sir_dcm(p: &SirParams) -> Result<SimOutput> {
    let traj = sir_dcm_trajectory(p)?;
    let [_, i, _] = *traj.last().expect("trajectory has the initial state");
    let mut out = SimOutput::new(i / f64::from(p.pop), true)?;
    out.value = out.value.clamp(0.0, 1.0);
    Ok(out)
}

/// Simulator identifiers accepted in configs and on the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SimulatorId {
    #[serde(rename = "toy1")]
    Toy1,
    #[serde(rename = "goldberg2d")]
    Goldberg2d,
    #[serde(rename = "binois")]
    Binois,
    #[serde(rename = "sir")]
    Sir,
}

impl SimulatorId {
    pub const ALL: [SimulatorId; 4] = [Self::Toy1, Self::Goldberg2d, Self::Binois, Self::Sir];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Toy1 => "toy1",
            Self::Goldberg2d => "goldberg2d",
            Self::Binois => "binois",
            Self::Sir => "sir",
        }
    }

    pub fn dim(self) -> usize {
        match self {
            Self::Toy1 | Self::Binois => 1,
            Self::Goldberg2d | Self::Sir => 2,
        }
    }
}

impl fmt::Display for SimulatorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SimulatorId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| Error::UnknownSimulator(s.to_string()))
    }
}

/// A stochastic simulator paired with its deterministic approximation.
#[derive(Clone, Debug, PartialEq)]
pub struct Simulator {
    pub id: SimulatorId,
    pub sir: SirParams,
}

impl Simulator {
    pub fn new(id: SimulatorId) -> Self {
        Self {
            id,
            sir: SirParams::default(),
        }
    }

    pub fn with_sir_params(id: SimulatorId, sir: SirParams) -> Self {
        Self { id, sir }
    }

    pub fn dim(&self) -> usize {
        self.id.dim()
    }

    pub fn run<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> Result<SimOutput> {
        check_unit(x, self.dim())?;
        match self.id {
            SimulatorId::Toy1 => toy1(x[0], rng),
            SimulatorId::Goldberg2d => toy_goldberg2d(x[0], x[1], rng),
            SimulatorId::Binois => toy_binois(x[0], rng),
            SimulatorId::Sir => sir_icm(&self.sir.with_unit_inputs(x)?, rng),
        }
    }

    pub fn run_deterministic(&self, x: &[f64]) -> Result<SimOutput> {
        check_unit(x, self.dim())?;
        match self.id {
            SimulatorId::Toy1 => toy1_det(x[0]),
            SimulatorId::Goldberg2d => toy_goldberg2d_det(x[0], x[1]),
            SimulatorId::Binois => toy_binois_det(x[0]),
            SimulatorId::Sir => sir_dcm(&self.sir.with_unit_inputs(x)?),
        }
    }

    /// Analytic mean and standard deviation, when known.
    pub fn true_moments(&self, x: &[f64]) -> Result<Option<TrueMoments>> {
        check_unit(x, self.dim())?;
        Ok(match self.id {
            SimulatorId::Toy1 => Some(TrueMoments {
                mean: toy1_mean(x[0]),
                sd: toy1_sd(x[0]),
            }),
            SimulatorId::Goldberg2d => Some(TrueMoments {
                mean: goldberg_mean(x[0], x[1]),
                sd: ((0.5 + x[0]).powi(2) + (0.5 + x[1]).powi(2)).sqrt(),
            }),
            SimulatorId::Binois => Some(TrueMoments {
                mean: binois_mean(x[0]),
                sd: (1.1 + (2.0 * PI * x[0]).sin()).abs(),
            }),
            SimulatorId::Sir => None,
        })
    }

    pub fn has_true_moments(&self) -> bool {
        self.id != SimulatorId::Sir
    }
}
