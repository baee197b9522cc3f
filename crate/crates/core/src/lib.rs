pub mod core_math;
pub mod design_lhs;
pub mod error;
pub mod experiment_harness;
pub mod inference;
pub mod metrics;
pub mod model_detgp;
pub mod model_dethetgp;
pub mod model_hetgp;
pub mod predictive;
pub mod rng;
pub mod scalar;
pub mod simulators;

pub use error::{Error, Result};
pub use scalar::Real;
