//! Limited-memory BFGS minimization with a strong Wolfe line search.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::core_math::dot;
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LbfgsConfig {
    pub max_iters: usize,
    /// Stop when the largest absolute gradient component falls below this.
    pub grad_tol: f64,
    /// Stop when an iteration improves the objective by less than `f_tol · max(1, |f|)`.
    pub f_tol: f64,
    pub history: usize,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        Self {
            max_iters: 500,
            grad_tol: 1e-6,
            f_tol: 1e-10,
            history: 10,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    GradientTolerance,
    FunctionTolerance,
    IterationCap,
    /// No step along the search direction decreased the objective.
    LineSearchStalled,
    /// The objective was not finite at the starting point.
    NonFiniteStart,
}

impl Termination {
    /// Whether the run ended at a usable point.
    pub fn is_usable(self) -> bool {
        !matches!(self, Termination::NonFiniteStart)
    }
}

#[derive(Clone, Debug)]
pub struct LbfgsReport<T> {
    pub x: Vec<T>,
    pub f: T,
    pub grad_inf_norm: T,
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: Termination,
}

fn inf_norm<T: Real>(g: &[T]) -> T {
    g.iter().fold(T::zero(), |m, v| m.max(v.abs()))
}

fn axpy<T: Real>(x: &[T], a: T, p: &[T]) -> Vec<T> {
    x.iter().zip(p).map(|(&xi, &pi)| xi + a * pi).collect()
}

struct Evaluated<T> {
    step: T,
    f: T,
    g: Vec<T>,
    slope: T,
}

/// Objective wrapper counting evaluations and mapping failures to `+∞`.
struct Counted<'a, T, F> {
    f: &'a mut F,
    evals: usize,
    _t: std::marker::PhantomData<T>,
}

impl<T: Real, F: FnMut(&[T]) -> Option<(T, Vec<T>)>> Counted<'_, T, F> {
    fn eval(&mut self, x: &[T]) -> Option<(T, Vec<T>)> {
        self.evals += 1;
        match (self.f)(x) {
            Some((f, g)) if f.is_finite() && g.iter().all(|v| v.is_finite()) => Some((f, g)),
            _ => None,
        }
    }
}

const C1: f64 = 1e-4;
const C2: f64 = 0.9;
const MAX_LS: usize = 30;

/// Minimizer of the cubic through `(a, fa, da)` and `(b, fb, db)`, safeguarded into
/// the middle 80% of the interval.
fn interpolate<T: Real>(a: T, fa: T, da: T, b: T, fb: T, db: T) -> T {
    let lo = a.min(b);
    let hi = a.max(b);
    let width = hi - lo;
    let d1 = da + db - T::lit(3.0) * (fa - fb) / (a - b);
    let disc = d1 * d1 - da * db;
    let mut t = if disc >= T::zero() {
        let d2 = (b - a).signum() * disc.sqrt();
        b - (b - a) * (db + d2 - d1) / (db - da + d2 + d2)
    } else {
        T::nan()
    };
    let margin = T::lit(0.1) * width;
    if !t.is_finite() || t < lo + margin || t > hi - margin {
        t = T::lit(0.5) * (lo + hi);
    }
    t
}

fn line_search<T: Real, F: FnMut(&[T]) -> Option<(T, Vec<T>)>>(
    obj: &mut Counted<'_, T, F>,
    x: &[T],
    f0: T,
    slope0: T,
    p: &[T],
    initial: T,
) -> Option<Evaluated<T>> {
    let c1 = T::lit(C1);
    let c2 = T::lit(C2);
    let armijo = |s: T, f: T| f <= f0 + c1 * s * slope0;

    let mut prev = Evaluated {
        step: T::zero(),
        f: f0,
        g: Vec::new(),
        slope: slope0,
    };
    let mut best_armijo: Option<Evaluated<T>> = None;
    let mut step = initial;
    let mut hi: Option<Evaluated<T>> = None;

    // bracketing phase
    for _ in 0..MAX_LS {
        let Some((f, g)) = obj.eval(&axpy(x, step, p)) else {
            // outside the objective's domain: shrink toward the last good step
            step = prev.step + T::lit(0.25) * (step - prev.step);
            if step <= T::lit(1e-20) {
                break;
            }
            continue;
        };
        let slope = dot(&g, p);
        let cur = Evaluated { step, f, g, slope };
        if !armijo(step, f) || (prev.step > T::zero() && f >= prev.f) {
            hi = Some(cur);
            break;
        }
        if slope.abs() <= -c2 * slope0 {
            return Some(cur);
        }
        if slope >= T::zero() {
            return zoom(obj, x, f0, slope0, p, cur, prev, &armijo);
        }
        best_armijo = Some(Evaluated {
            step: cur.step,
            f: cur.f,
            g: cur.g.clone(),
            slope: cur.slope,
        });
        prev = cur;
        step = step + step;
    }
    match hi {
        Some(h) => zoom(obj, x, f0, slope0, p, prev, h, &armijo).or(best_armijo),
        None => best_armijo,
    }
}

#[allow(clippy::too_many_arguments)]
fn zoom<T: Real, F: FnMut(&[T]) -> Option<(T, Vec<T>)>>(
    obj: &mut Counted<'_, T, F>,
    x: &[T],
    f0: T,
    slope0: T,
    p: &[T],
    mut lo: Evaluated<T>,
    mut hi: Evaluated<T>,
    armijo: &impl Fn(T, T) -> bool,
) -> Option<Evaluated<T>> {
    let c2 = T::lit(C2);
    for _ in 0..MAX_LS {
        let step = interpolate(lo.step, lo.f, lo.slope, hi.step, hi.f, hi.slope);
        if (hi.step - lo.step).abs() <= T::epsilon() * lo.step.abs().max(T::one()) {
            break;
        }
        let Some((f, g)) = obj.eval(&axpy(x, step, p)) else {
            hi = Evaluated {
                step,
                f: T::infinity(),
                g: Vec::new(),
                slope: T::zero(),
            };
            continue;
        };
        let slope = dot(&g, p);
        let cur = Evaluated { step, f, g, slope };
        if !armijo(step, f) || f >= lo.f {
            hi = cur;
        } else {
            if slope.abs() <= -c2 * slope0 {
                return Some(cur);
            }
            if slope * (hi.step - lo.step) >= T::zero() {
                hi = std::mem::replace(&mut lo, cur);
            } else {
                lo = cur;
            }
        }
    }
    // accept the best sufficient-decrease point found
    if lo.step > T::zero() && lo.f < f0 {
        Some(lo)
    } else {
        None
    }
}

/// Minimizes `f`, which returns the value and gradient or `None` outside its domain.
pub fn minimize<T: Real, F>(mut f: F, x0: Vec<T>, cfg: &LbfgsConfig) -> LbfgsReport<T>
where
    F: FnMut(&[T]) -> Option<(T, Vec<T>)>,
{
    let mut obj = Counted {
        f: &mut f,
        evals: 0,
        _t: std::marker::PhantomData,
    };
    let Some((mut fx, mut g)) = obj.eval(&x0) else {
        return LbfgsReport {
            x: x0,
            f: T::infinity(),
            grad_inf_norm: T::infinity(),
            iterations: 0,
            evaluations: obj.evals,
            termination: Termination::NonFiniteStart,
        };
    };
    let mut x = x0;
    let mut mem: VecDeque<(Vec<T>, Vec<T>, T)> = VecDeque::with_capacity(cfg.history);
    let grad_tol = T::lit(cfg.grad_tol);
    let f_tol = T::lit(cfg.f_tol);
    let mut iterations = 0;

    let termination = loop {
        if inf_norm(&g) <= grad_tol {
            break Termination::GradientTolerance;
        }
        if iterations >= cfg.max_iters {
            break Termination::IterationCap;
        }

        // two-loop recursion
        let mut q: Vec<T> = g.clone();
        let mut alphas = Vec::with_capacity(mem.len());
        for (s, y, rho) in mem.iter().rev() {
            let a = *rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, &yi)| *qi -= a * yi);
            alphas.push(a);
        }
        if let Some((s, y, _)) = mem.back() {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|qi| *qi *= gamma);
        }
        for ((s, y, rho), a) in mem.iter().zip(alphas.into_iter().rev()) {
            let b = *rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, &si)| *qi += (a - b) * si);
        }
        let mut p: Vec<T> = q.into_iter().map(|v| -v).collect();
        let mut slope = dot(&g, &p);
        if !(slope < T::zero()) {
            mem.clear();
            p = g.iter().map(|&v| -v).collect();
            slope = dot(&g, &p);
        }
        let initial = if mem.is_empty() {
            T::one().min(T::one() / inf_norm(&g))
        } else {
            T::one()
        };

        let Some(next) = line_search(&mut obj, &x, fx, slope, &p, initial) else {
            if !mem.is_empty() {
                // retry once from steepest descent with fresh memory
                mem.clear();
                continue;
            }
            break Termination::LineSearchStalled;
        };
        iterations += 1;
        let x_new = axpy(&x, next.step, &p);
        let s: Vec<T> = x_new.iter().zip(&x).map(|(&a, &b)| a - b).collect();
        let y: Vec<T> = next.g.iter().zip(&g).map(|(&a, &b)| a - b).collect();
        let sy = dot(&s, &y);
        let improvement = fx - next.f;
        x = x_new;
        fx = next.f;
        g = next.g;
        if sy > T::epsilon() * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
            if mem.len() == cfg.history {
                mem.pop_front();
            }
            mem.push_back((s, y, T::one() / sy));
        }
        if improvement <= f_tol * fx.abs().max(T::one()) {
            break Termination::FunctionTolerance;
        }
    };

    LbfgsReport {
        grad_inf_norm: inf_norm(&g),
        x,
        f: fx,
        iterations,
        evaluations: obj.evals,
        termination,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_minimum() {
        let r = minimize(
            |x: &[f64]| Some(((x[0] - 3.0).powi(2), vec![2.0 * (x[0] - 3.0)])),
            vec![-4.0],
            &LbfgsConfig::default(),
        );
        assert!((r.x[0] - 3.0).abs() < 1e-6, "{r:?}");
    }

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| {
            let (a, b) = (x[0], x[1]);
            let v = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
            let g = vec![
                -2.0 * (1.0 - a) - 400.0 * a * (b - a * a),
                200.0 * (b - a * a),
            ];
            Some((v, g))
        };
        let cfg = LbfgsConfig {
            f_tol: 0.0,
            ..LbfgsConfig::default()
        };
        let r = minimize(f, vec![-1.2, 1.0], &cfg);
        assert!((r.x[0] - 1.0).abs() < 1e-5 && (r.x[1] - 1.0).abs() < 1e-5, "{r:?}");
        assert_eq!(r.termination, Termination::GradientTolerance);
    }

    #[test]
    fn respects_domain_failures() {
        // log barrier: undefined for x <= 0, minimum at x = 1
        let f = |x: &[f64]| {
            if x[0] <= 0.0 {
                None
            } else {
                Some((x[0] - x[0].ln(), vec![1.0 - 1.0 / x[0]]))
            }
        };
        let r = minimize(f, vec![40.0], &LbfgsConfig::default());
        assert!((r.x[0] - 1.0).abs() < 1e-5, "{r:?}");
    }

    #[test]
    fn non_finite_start() {
        let r = minimize(|_: &[f64]| None, vec![0.0], &LbfgsConfig::default());
        assert_eq!(r.termination, Termination::NonFiniteStart);
        assert!(!r.termination.is_usable());
    }

    #[test]
    fn iteration_cap() {
        let cfg = LbfgsConfig {
            max_iters: 2,
            f_tol: 0.0,
            ..LbfgsConfig::default()
        };
        let f = |x: &[f64]| {
            let v: f64 = x.iter().enumerate().map(|(i, v)| (i as f64 + 1.0) * v.powi(4)).sum();
            let g = x.iter().enumerate().map(|(i, v)| 4.0 * (i as f64 + 1.0) * v.powi(3)).collect();
            Some((v, g))
        };
        let r = minimize(f, vec![1.0; 5], &cfg);
        assert_eq!(r.termination, Termination::IterationCap);
        assert_eq!(r.iterations, 2);
    }
}
