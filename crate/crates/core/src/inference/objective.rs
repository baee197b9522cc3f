//! Log-posterior objectives over flat, unconstrained parameter vectors.
//!
//! A GP layer is encoded as `[β₀, β₁..β_d, log α, u₁..u_d]` with lengthscale
//! `lᵢ = floor + exp(uᵢ)` (floor zero unless the layer is constrained). Priors are
//! evaluated on the natural scale and no change-of-variables Jacobian is added, so
//! the optimum is the posterior mode in the original parameters.

use std::ops::Range;

use super::priors::PriorSpec;
use crate::core_math::{cholesky, CholFactor, KernelParams, LinearMeanParams, Matrix};
use crate::error::{Error, Result};
use crate::rng::SimRng;
use crate::scalar::Real;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Named slices of the flat parameter vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamLayout {
    pub slices: Vec<(String, Range<usize>)>,
}

impl ParamLayout {
    pub fn len(&self) -> usize {
        self.slices.last().map_or(0, |(_, r)| r.end)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, name: &str) -> Option<Range<usize>> {
        self.slices
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, r)| r.clone())
    }

    fn push(&mut self, name: impl Into<String>, len: usize) {
        let start = self.len();
        self.slices.push((name.into(), start..start + len));
    }

    fn push_layer(&mut self, prefix: &str, d: usize) {
        self.push(format!("{prefix}beta0"), 1);
        self.push(format!("{prefix}beta"), d);
        self.push(format!("{prefix}log_alpha"), 1);
        self.push(format!("{prefix}log_lengthscale"), d);
    }
}

/// A log posterior to be maximized.
pub trait Objective<T: Real>: Sync {
    fn dim(&self) -> usize {
        self.layout().len()
    }

    fn layout(&self) -> &ParamLayout;

    /// Log posterior, `-∞` wherever it cannot be evaluated.
    fn log_posterior(&self, theta: &[T]) -> T;

    /// Log posterior and its analytic gradient, `None` wherever it cannot be evaluated.
    fn log_posterior_with_gradient(&self, theta: &[T]) -> Option<(T, Vec<T>)>;

    /// Starting point for one optimizer restart.
    fn initial_point(&self, rng: &mut SimRng) -> Vec<T>;
}

/// Encoding of one GP layer's mean and kernel parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LayerCodec<T> {
    pub d: usize,
    pub floor: T,
    pub nugget: T,
}

impl<T: Real> LayerCodec<T> {
    pub fn len(&self) -> usize {
        2 * self.d + 2
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn decode(&self, theta: &[T]) -> (LinearMeanParams<T>, KernelParams<T>) {
        let d = self.d;
        let mean = LinearMeanParams {
            intercept: theta[0],
            slopes: theta[1..=d].to_vec(),
        };
        let kernel = KernelParams {
            alpha: theta[d + 1].exp(),
            lengthscales: theta[d + 2..2 * d + 2]
                .iter()
                .map(|&u| self.floor + u.exp())
                .collect(),
            nugget: self.nugget,
        };
        (mean, kernel)
    }

    pub fn encode(&self, mean: &LinearMeanParams<T>, kernel: &KernelParams<T>) -> Vec<T> {
        let mut v = Vec::with_capacity(self.len());
        v.push(mean.intercept);
        v.extend_from_slice(&mean.slopes);
        v.push(kernel.alpha.ln());
        v.extend(kernel.lengthscales.iter().map(|&l| (l - self.floor).ln()));
        v
    }

    fn sample(&self, prior: &PriorSpec, rng: &mut SimRng) -> Vec<T> {
        let mut v = Vec::with_capacity(self.len());
        for _ in 0..=self.d {
            v.push(T::lit(prior.sample_beta(rng)));
        }
        v.push(T::lit(prior.sample_alpha(rng).ln()));
        for _ in 0..self.d {
            v.push(T::lit(prior.sample_lengthscale(rng).ln()));
        }
        v
    }

    /// Log prior of an encoded layer and its gradient in the encoded coordinates.
    fn log_prior(&self, theta: &[T], prior: &PriorSpec, grad: Option<&mut [T]>) -> T {
        let d = self.d;
        let mut lp = T::zero();
        for &b in &theta[..=d] {
            lp += prior.log_normal_beta(b);
        }
        let alpha = theta[d + 1].exp();
        lp += prior.log_inv_gamma_alpha(alpha);
        for &u in &theta[d + 2..] {
            lp += prior.log_gamma_lengthscale(u.exp());
        }
        if let Some(g) = grad {
            for k in 0..=d {
                g[k] += prior.d_log_normal_beta(theta[k]);
            }
            g[d + 1] += prior.d_log_inv_gamma_alpha_dlog(alpha);
            for k in 0..d {
                g[d + 2 + k] += prior.d_log_gamma_lengthscale_dlog(theta[d + 2 + k].exp());
            }
        }
        lp
    }
}

/// Squared coordinate differences of every lower-triangle point pair.
#[derive(Clone, Debug)]
pub struct PairDiffs<T> {
    d: usize,
    data: Vec<T>,
}

impl<T: Real> PairDiffs<T> {
    pub fn new(x: &Matrix<T>) -> Self {
        let (n, d) = (x.nrows(), x.ncols());
        let mut data = Vec::with_capacity(n * n.saturating_sub(1) / 2 * d);
        for i in 0..n {
            for j in 0..i {
                for (&a, &b) in x.row(i).iter().zip(x.row(j)) {
                    data.push((a - b) * (a - b));
                }
            }
        }
        Self { d, data }
    }

    #[inline]
    fn pair(&self, i: usize, j: usize) -> &[T] {
        let p = i * (i - 1) / 2 + j;
        &self.data[p * self.d..(p + 1) * self.d]
    }
}

/// Data term of one Gaussian layer and, on request, its gradients.
pub(crate) struct LayerEval<T> {
    pub loglik: T,
    /// Gradient in the layer encoding `[β₀, β, log α, u]`.
    pub grad_params: Vec<T>,
    /// `∂ loglik / ∂ Σ_jj` for each diagonal noise entry.
    pub grad_diag: Vec<T>,
    /// `∂ loglik / ∂ target_j`.
    pub grad_target: Vec<T>,
}

/// Log density of `target ~ N(m(X), α² C(X, X) + diag(noise))` for one layer.
#[allow(clippy::too_many_arguments)]
pub(crate) fn layer_loglik<T: Real>(
    x: &Matrix<T>,
    diffs: &PairDiffs<T>,
    target: &[T],
    mean: &LinearMeanParams<T>,
    kernel: &KernelParams<T>,
    floor: T,
    noise: &[T],
    want_grad: bool,
) -> Option<LayerEval<T>> {
    let n = x.nrows();
    let d = x.ncols();
    let var = kernel.variance();
    let inv_l2: Vec<T> = kernel
        .lengthscales
        .iter()
        .map(|&l| T::one() / (l * l))
        .collect();

    let mut k = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..i {
            let e: T = diffs
                .pair(i, j)
                .iter()
                .zip(&inv_l2)
                .map(|(&dd, &w)| dd * w)
                .sum();
            let v = var * (-e).exp();
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
        k[(i, i)] = var + noise[i];
    }
    let chol = cholesky(&k).ok()?;
    let resid: Vec<T> = x
        .rows_iter()
        .zip(target)
        .map(|(r, &t)| t - mean.eval(r))
        .collect();
    let a = chol.solve_vec(&resid).ok()?;
    let quad = crate::core_math::dot(&resid, &a);
    let loglik = T::lit(-0.5) * (quad + chol.log_det() + T::lit(n as f64 * LN_2PI));
    if !loglik.is_finite() {
        return None;
    }
    if !want_grad {
        return Some(LayerEval {
            loglik,
            grad_params: Vec::new(),
            grad_diag: Vec::new(),
            grad_target: Vec::new(),
        });
    }

    let sinv = chol.inverse();
    let mut grad = vec![T::zero(); 2 * d + 2];
    // mean coefficients: Xᵀ a
    for (row, &aj) in x.rows_iter().zip(&a) {
        grad[0] += aj;
        for (g, &xv) in grad[1..=d].iter_mut().zip(row) {
            *g += aj * xv;
        }
    }
    // covariance parameters: ½ tr(W ∂Σ) with W = a aᵀ - Σ⁻¹
    let mut g_alpha = T::zero();
    let mut g_len = vec![T::zero(); d];
    for i in 0..n {
        for j in 0..i {
            let wk = (a[i] * a[j] - sinv[(i, j)]) * k[(i, j)];
            g_alpha += wk;
            for ((g, &dd), _) in g_len.iter_mut().zip(diffs.pair(i, j)).zip(0..d) {
                *g += wk * dd;
            }
        }
    }
    let two = T::lit(2.0);
    g_alpha = two * g_alpha;
    let diag_w: Vec<T> = (0..n).map(|i| a[i] * a[i] - sinv[(i, i)]).collect();
    g_alpha += diag_w.iter().copied().sum::<T>() * var;
    grad[d + 1] = g_alpha;
    for (kk, g) in g_len.into_iter().enumerate() {
        let l = kernel.lengthscales[kk];
        // Σ_ij W K D / l³ counts both triangles; chain through dl/du = l - floor
        grad[d + 2 + kk] = two * g * inv_l2[kk] / l * (l - floor);
    }
    let half = T::lit(0.5);
    Some(LayerEval {
        loglik,
        grad_params: grad,
        grad_diag: diag_w.into_iter().map(|w| half * w).collect(),
        grad_target: a.into_iter().map(|v| -v).collect(),
    })
}

/// Homoscedastic GP posterior: one layer, nugget-only noise (plus optional fixed extras).
#[derive(Clone, Debug)]
pub struct GpObjective<T> {
    x: Matrix<T>,
    y: Vec<T>,
    diffs: PairDiffs<T>,
    noise: Vec<T>,
    prior: PriorSpec,
    codec: LayerCodec<T>,
    layout: ParamLayout,
}

impl<T: Real> GpObjective<T> {
    /// `lengthscale_floor = Some(f)` reparameterizes every lengthscale as `f + l*`
    /// with the Gamma prior on `l*`.
    pub fn new(
        x: Matrix<T>,
        y: Vec<T>,
        prior: PriorSpec,
        nugget: T,
        lengthscale_floor: Option<T>,
    ) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::DimensionMismatch {
                context: "GpObjective targets",
                expected: x.nrows(),
                actual: y.len(),
            });
        }
        prior.validate()?;
        let d = x.ncols();
        let codec = LayerCodec {
            d,
            floor: lengthscale_floor.unwrap_or_else(T::zero),
            nugget,
        };
        let mut layout = ParamLayout { slices: Vec::new() };
        layout.push_layer("", d);
        Ok(Self {
            diffs: PairDiffs::new(&x),
            noise: vec![nugget; x.nrows()],
            x,
            y,
            prior,
            codec,
            layout,
        })
    }

    pub fn codec(&self) -> &LayerCodec<T> {
        &self.codec
    }

    fn eval(&self, theta: &[T], want_grad: bool) -> Option<(T, Vec<T>)> {
        if theta.len() != self.codec.len() || theta.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let (mean, kernel) = self.codec.decode(theta);
        let ev = layer_loglik(
            &self.x,
            &self.diffs,
            &self.y,
            &mean,
            &kernel,
            self.codec.floor,
            &self.noise,
            want_grad,
        )?;
        let mut grad = ev.grad_params;
        let lp = self.codec.log_prior(
            theta,
            &self.prior,
            if want_grad { Some(&mut grad) } else { None },
        );
        let total = ev.loglik + lp;
        total.is_finite().then_some((total, grad))
    }
}

impl<T: Real> Objective<T> for GpObjective<T> {
    fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    fn log_posterior(&self, theta: &[T]) -> T {
        self.eval(theta, false).map_or(T::neg_infinity(), |(v, _)| v)
    }

    fn log_posterior_with_gradient(&self, theta: &[T]) -> Option<(T, Vec<T>)> {
        self.eval(theta, true)
    }

    fn initial_point(&self, rng: &mut SimRng) -> Vec<T> {
        self.codec.sample(&self.prior, rng)
    }
}

/// Joint posterior of a heteroscedastic GP: the main layer with per-point noise
/// `exp(λ_j)`, the log-variance layer on λ, and the hyperpriors of both layers.
///
/// Parameter order: main layer, log-variance layer, then `λ₁..λ_n`.
#[derive(Clone, Debug)]
pub struct HetGpObjective<T> {
    x: Matrix<T>,
    y: Vec<T>,
    diffs: PairDiffs<T>,
    /// Fixed noise added to the main diagonal on top of `exp(λ)`: nugget plus any extras.
    base_noise: Vec<T>,
    latent_noise: Vec<T>,
    prior: PriorSpec,
    codec: LayerCodec<T>,
    init_log_var: f64,
    layout: ParamLayout,
}

impl<T: Real> HetGpObjective<T> {
    /// `extra_noise`, when given, is a fixed per-point variance added to the main
    /// layer's diagonal.
    pub fn new(
        x: Matrix<T>,
        y: Vec<T>,
        prior: PriorSpec,
        nugget: T,
        extra_noise: Option<Vec<T>>,
    ) -> Result<Self> {
        let n = x.nrows();
        if n != y.len() {
            return Err(Error::DimensionMismatch {
                context: "HetGpObjective targets",
                expected: n,
                actual: y.len(),
            });
        }
        if n < 2 {
            return Err(Error::InvalidArgument(
                "heteroscedastic GP needs at least two points".into(),
            ));
        }
        prior.validate()?;
        let mut base_noise = vec![nugget; n];
        if let Some(extra) = extra_noise {
            if extra.len() != n {
                return Err(Error::DimensionMismatch {
                    context: "HetGpObjective extra noise",
                    expected: n,
                    actual: extra.len(),
                });
            }
            for (b, e) in base_noise.iter_mut().zip(extra) {
                *b += e;
            }
        }
        let d = x.ncols();
        let codec = LayerCodec {
            d,
            floor: T::zero(),
            nugget,
        };
        let mut layout = ParamLayout { slices: Vec::new() };
        layout.push_layer("", d);
        layout.push_layer("var_", d);
        layout.push("lambda", n);
        let yf: Vec<f64> = y.iter().map(|v| v.as_f64()).collect();
        let mean = yf.iter().sum::<f64>() / n as f64;
        let var = yf.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        Ok(Self {
            diffs: PairDiffs::new(&x),
            latent_noise: vec![nugget; n],
            x,
            y,
            base_noise,
            prior,
            codec,
            // a constant target has zero sample variance; fall back to a small one
            init_log_var: var.max(1e-6).ln(),
            layout,
        })
    }

    pub fn codec(&self) -> &LayerCodec<T> {
        &self.codec
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    fn eval(&self, theta: &[T], want_grad: bool) -> Option<(T, Vec<T>)> {
        if theta.len() != self.layout.len() || theta.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let nl = self.codec.len();
        let n = self.n();
        let (main, rest) = theta.split_at(nl);
        let (var_layer, lambda) = rest.split_at(nl);
        let (mean, kernel) = self.codec.decode(main);
        let (vmean, vkernel) = self.codec.decode(var_layer);

        let exp_lambda: Vec<T> = lambda.iter().map(|l| l.exp()).collect();
        if exp_lambda.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let noise: Vec<T> = exp_lambda
            .iter()
            .zip(&self.base_noise)
            .map(|(&e, &b)| e + b)
            .collect();
        let top = layer_loglik(
            &self.x, &self.diffs, &self.y, &mean, &kernel, T::zero(), &noise, want_grad,
        )?;
        let latent = layer_loglik(
            &self.x,
            &self.diffs,
            lambda,
            &vmean,
            &vkernel,
            T::zero(),
            &self.latent_noise,
            want_grad,
        )?;
        let mut grad = Vec::new();
        if want_grad {
            grad.reserve(self.layout.len());
            grad.extend_from_slice(&top.grad_params);
            grad.extend_from_slice(&latent.grad_params);
            grad.extend((0..n).map(|j| top.grad_diag[j] * exp_lambda[j] + latent.grad_target[j]));
        }
        let (g_main, g_rest) = if want_grad {
            let (a, b) = grad.split_at_mut(nl);
            (Some(a), Some(b))
        } else {
            (None, None)
        };
        let mut total = top.loglik + latent.loglik;
        total += self.codec.log_prior(main, &self.prior, g_main);
        total += self
            .codec
            .log_prior(var_layer, &self.prior, g_rest.map(|g| &mut g[..nl]));
        total.is_finite().then_some((total, grad))
    }
}

impl<T: Real> Objective<T> for HetGpObjective<T> {
    fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    fn log_posterior(&self, theta: &[T]) -> T {
        self.eval(theta, false).map_or(T::neg_infinity(), |(v, _)| v)
    }

    fn log_posterior_with_gradient(&self, theta: &[T]) -> Option<(T, Vec<T>)> {
        self.eval(theta, true)
    }

    fn initial_point(&self, rng: &mut SimRng) -> Vec<T> {
        let mut v = self.codec.sample(&self.prior, rng);
        v.extend(self.codec.sample(&self.prior, rng));
        v.extend(std::iter::repeat_n(T::lit(self.init_log_var), self.n()));
        v
    }
}

/// Central finite-difference gradient of `obj.log_posterior` with step `h`.
pub fn finite_difference_gradient<T: Real, O: Objective<T> + ?Sized>(
    obj: &O,
    theta: &[T],
    h: T,
) -> Option<Vec<T>> {
    let mut x = theta.to_vec();
    let mut g = Vec::with_capacity(theta.len());
    for k in 0..theta.len() {
        x[k] = theta[k] + h;
        let up = obj.log_posterior(&x);
        x[k] = theta[k] - h;
        let down = obj.log_posterior(&x);
        x[k] = theta[k];
        let v = (up - down) / (h + h);
        if !v.is_finite() {
            return None;
        }
        g.push(v);
    }
    Some(g)
}

/// Log density of `y ~ N(mean, Σ)` given the Cholesky factor of `Σ`.
pub fn gaussian_loglik<T: Real>(y: &[T], mean: &[T], cov: &CholFactor<T>) -> Result<T> {
    if y.len() != mean.len() || y.len() != cov.dim() {
        return Err(Error::DimensionMismatch {
            context: "gaussian_loglik",
            expected: cov.dim(),
            actual: y.len().max(mean.len()),
        });
    }
    let r: Vec<T> = y.iter().zip(mean).map(|(&a, &b)| a - b).collect();
    let mut z = r;
    cov.forward_solve_in_place(&mut z);
    let quad = crate::core_math::dot(&z, &z);
    Ok(T::lit(-0.5) * (quad + cov.log_det() + T::lit(y.len() as f64 * LN_2PI)))
}
