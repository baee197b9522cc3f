use serde::{Deserialize, Serialize};

use super::trained::ModelFile;
use crate::core_math::Matrix;
use crate::error::{Error, Result};

/// z-value of a central 95% Gaussian interval.
pub const Z95: f64 = 1.96;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossSectionRow {
    pub x: f64,
    pub mean: f64,
    pub variance: f64,
    pub lower95: f64,
    pub upper95: f64,
    /// Deterministic-layer mean, for DetHetGP models.
    pub det_mean: Option<f64>,
}

/// Predictions along one input axis on an evenly spaced `grid` over [0, 1], with
/// every other input held at its `fixed` value. `fixed[axis]` must be `None` and
/// every other entry `Some`.
pub fn cross_section(
    model: &ModelFile,
    fixed: &[Option<f64>],
    axis: usize,
    grid: usize,
) -> Result<Vec<CrossSectionRow>> {
    let d = model.model.dim();
    if fixed.len() != d {
        return Err(Error::DimensionMismatch {
            context: "cross-section fixed inputs",
            expected: d,
            actual: fixed.len(),
        });
    }
    if axis >= d {
        return Err(Error::InvalidArgument(format!("axis {axis} out of range for {d} inputs")));
    }
    if grid < 2 {
        return Err(Error::InvalidArgument("cross-section grid needs at least 2 points".into()));
    }
    for (k, f) in fixed.iter().enumerate() {
        match (k == axis, f) {
            (true, Some(_)) => {
                return Err(Error::InvalidArgument(format!("input {k} is the varying axis but has a fixed value")))
            }
            (false, None) => return Err(Error::InvalidArgument(format!("input {k} needs a fixed value"))),
            (false, Some(v)) if !(0.0..=1.0).contains(v) => {
                return Err(Error::OutOfRange { dim: k, value: *v })
            }
            _ => {}
        }
    }
    let xs: Vec<f64> = (0..grid).map(|i| i as f64 / (grid - 1) as f64).collect();
    let points = Matrix::from_fn(grid, d, |i, k| if k == axis { xs[i] } else { fixed[k].unwrap_or(0.0) });
    let p = model.predict(&points)?;
    Ok(xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let half = Z95 * p.variance[i].max(0.0).sqrt();
            CrossSectionRow {
                x,
                mean: p.mean[i],
                variance: p.variance[i],
                lower95: p.mean[i] - half,
                upper95: p.mean[i] + half,
                det_mean: p.det_mean.as_ref().map(|v| v[i]),
            }
        })
        .collect())
}
