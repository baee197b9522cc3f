//! Hyperpriors on mean coefficients, output scales and lengthscales.

use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};

use crate::core_math::{KernelParams, LinearMeanParams};
use crate::scalar::Real;

/// Prior family shared by every GP layer: Normal on each mean coefficient,
/// Inverse-Gamma on each output scale `α`, Gamma on each lengthscale.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    /// Standard deviation of the zero-mean Normal on β₀ and β.
    pub beta_sd: f64,
    pub alpha_shape: f64,
    pub alpha_scale: f64,
    pub lengthscale_shape: f64,
    pub lengthscale_rate: f64,
}

impl Default for PriorSpec {
    fn default() -> Self {
        Self {
            beta_sd: 10.0,
            alpha_shape: 2.0,
            alpha_scale: 1.0,
            lengthscale_shape: 4.0,
            lengthscale_rate: 4.0,
        }
    }
}

impl PriorSpec {
    pub fn with_beta_sd(beta_sd: f64) -> Self {
        Self {
            beta_sd,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> crate::Result<()> {
        let all = [
            self.beta_sd,
            self.alpha_shape,
            self.alpha_scale,
            self.lengthscale_shape,
            self.lengthscale_rate,
        ];
        if all.iter().all(|v| *v > 0.0 && v.is_finite()) {
            Ok(())
        } else {
            Err(crate::Error::InvalidArgument(format!(
                "prior constants must be positive: {self:?}"
            )))
        }
    }

    pub fn log_normal_beta<T: Real>(&self, b: T) -> T {
        let sd = T::lit(self.beta_sd);
        let z = b / sd;
        T::lit(-0.5 * (2.0 * std::f64::consts::PI).ln() - self.beta_sd.ln()) - T::lit(0.5) * z * z
    }

    /// Derivative of [`Self::log_normal_beta`].
    pub fn d_log_normal_beta<T: Real>(&self, b: T) -> T {
        -b / T::lit(self.beta_sd * self.beta_sd)
    }

    /// Inverse-Gamma(shape, scale) log density; `-∞` outside the support.
    pub fn log_inv_gamma_alpha<T: Real>(&self, a: T) -> T {
        if !(a > T::zero()) {
            return T::neg_infinity();
        }
        let (k, s) = (self.alpha_shape, self.alpha_scale);
        T::lit(k * s.ln() - ln_gamma(k)) - T::lit(k + 1.0) * a.ln() - T::lit(s) / a
    }

    /// Derivative of [`Self::log_inv_gamma_alpha`] with respect to `log α`.
    pub fn d_log_inv_gamma_alpha_dlog<T: Real>(&self, a: T) -> T {
        T::lit(self.alpha_scale) / a - T::lit(self.alpha_shape + 1.0)
    }

    /// Gamma(shape, rate) log density; `-∞` outside the support.
    pub fn log_gamma_lengthscale<T: Real>(&self, l: T) -> T {
        if !(l > T::zero()) {
            return T::neg_infinity();
        }
        let (k, r) = (self.lengthscale_shape, self.lengthscale_rate);
        T::lit(k * r.ln() - ln_gamma(k)) + T::lit(k - 1.0) * l.ln() - T::lit(r) * l
    }

    /// Derivative of [`Self::log_gamma_lengthscale`] with respect to `log l`.
    pub fn d_log_gamma_lengthscale_dlog<T: Real>(&self, l: T) -> T {
        T::lit(self.lengthscale_shape - 1.0) - T::lit(self.lengthscale_rate) * l
    }

    pub fn sample_beta<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        Normal::new(0.0, self.beta_sd).expect("valid sd").sample(rng)
    }

    pub fn sample_alpha<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        // 1/α ~ Gamma(shape, rate = scale)
        let g = Gamma::new(self.alpha_shape, 1.0 / self.alpha_scale).expect("valid gamma");
        1.0 / g.sample(rng)
    }

    pub fn sample_lengthscale<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        Gamma::new(self.lengthscale_shape, 1.0 / self.lengthscale_rate)
            .expect("valid gamma")
            .sample(rng)
    }
}

/// Log prior of one GP layer. With `lengthscale_floor = Some(f)` the Gamma prior
/// applies to `l - f` instead of `l`.
pub fn log_prior<T: Real>(
    mean: &LinearMeanParams<T>,
    kernel: &KernelParams<T>,
    spec: &PriorSpec,
    lengthscale_floor: Option<T>,
) -> T {
    let floor = lengthscale_floor.unwrap_or_else(T::zero);
    let mut lp = spec.log_normal_beta(mean.intercept);
    lp += mean.slopes.iter().map(|&b| spec.log_normal_beta(b)).sum::<T>();
    lp += spec.log_inv_gamma_alpha(kernel.alpha);
    lp += kernel
        .lengthscales
        .iter()
        .map(|&l| spec.log_gamma_lengthscale(l - floor))
        .sum::<T>();
    lp
}

/// Natural log of the gamma function (Lanczos, g = 7, n = 9), for positive arguments.
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    #[allow(clippy::excessive_precision)]
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_59,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = COEF[0];
    let t = x + G + 0.5;
    for (i, c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}
