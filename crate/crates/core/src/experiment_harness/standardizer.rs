use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Affine output transform `(y - mean) / sd`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Standardizer {
    pub y_mean: f64,
    pub y_sd: f64,
    /// What the moments were computed from.
    pub source: String,
}

impl Standardizer {
    /// Sample mean and standard deviation (n - 1 denominator) of `y`.
    pub fn fit(y: &[f64], source: impl Into<String>) -> Result<Self> {
        if y.len() < 2 {
            return Err(Error::InvalidArgument(
                "standardizer needs at least two outputs".into(),
            ));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("standardizer data"));
        }
        let n = y.len() as f64;
        let mean = y.iter().sum::<f64>() / n;
        let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let sd = var.sqrt();
        if !(sd > 0.0) {
            return Err(Error::InvalidArgument(
                "standardizer data has zero spread".into(),
            ));
        }
        Ok(Self {
            y_mean: mean,
            y_sd: sd,
            source: source.into(),
        })
    }

    pub fn identity() -> Self {
        Self {
            y_mean: 0.0,
            y_sd: 1.0,
            source: "identity".into(),
        }
    }

    pub fn apply(&self, y: f64) -> f64 {
        (y - self.y_mean) / self.y_sd
    }

    pub fn invert(&self, z: f64) -> f64 {
        z * self.y_sd + self.y_mean
    }

    pub fn apply_all(&self, y: &[f64]) -> Vec<f64> {
        y.iter().map(|&v| self.apply(v)).collect()
    }

    /// Maps a variance on the standardized scale back to the natural scale.
    pub fn invert_variance(&self, v: f64) -> f64 {
        v * self.y_sd * self.y_sd
    }
}
