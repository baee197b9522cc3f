//! Maximin Latin hypercube designs on the unit hypercube.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::core_math::Matrix;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from};
use crate::scalar::Real;

pub const DEFAULT_LHS_CANDIDATES: usize = 1000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Design<T> {
    pub points: Matrix<T>,
    pub seed: u64,
    pub n_candidates: usize,
}

impl<T: Real> Design<T> {
    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }
}

/// One jittered Latin hypercube: an independent random permutation of the `n`
/// strata per dimension, with a uniform position inside each cell.
fn random_lhs<T: Real, R: Rng>(n: usize, d: usize, rng: &mut R) -> Matrix<T> {
    let mut pts = Matrix::zeros(n, d);
    let mut perm: Vec<usize> = (0..n).collect();
    let width = 1.0 / n as f64;
    for j in 0..d {
        perm.shuffle(rng);
        for (i, &stratum) in perm.iter().enumerate() {
            let u: f64 = rng.random();
            // stay strictly inside [k/n, (k+1)/n)
            let x = ((stratum as f64 + u) * width).min((stratum + 1) as f64 * width - f64::EPSILON);
            pts[(i, j)] = T::lit(x);
        }
    }
    pts
}

fn min_distance_sq<T: Real>(pts: &Matrix<T>) -> T {
    let mut best = T::infinity();
    for i in 0..pts.nrows() {
        let a = pts.row(i);
        for j in 0..i {
            let mut s = T::zero();
            for (&x, &y) in a.iter().zip(pts.row(j)) {
                let dx = x - y;
                s += dx * dx;
            }
            if s < best {
                best = s;
            }
        }
    }
    best
}

/// Best of `n_candidates` random Latin hypercubes under the maximin criterion.
///
/// Candidate `c` is drawn from its own stream `derive_seed(seed, c)`, so the
/// first candidate of a large search is the design a one-candidate search returns.
pub fn maximin_lhs<T: Real>(n: usize, d: usize, seed: u64, n_candidates: usize) -> Result<Design<T>> {
    if n == 0 || d == 0 {
        return Err(Error::InvalidArgument(format!(
            "Latin hypercube needs n >= 1 and d >= 1, got n={n}, d={d}"
        )));
    }
    if n_candidates == 0 {
        return Err(Error::InvalidArgument("n_candidates must be >= 1".into()));
    }
    let mut best: Option<(T, Matrix<T>)> = None;
    for c in 0..n_candidates {
        let mut rng = rng_from(derive_seed(seed, c as u64));
        let pts = random_lhs::<T, _>(n, d, &mut rng);
        if n == 1 {
            best = Some((T::zero(), pts));
            break;
        }
        let score = min_distance_sq(&pts);
        if best.as_ref().map_or(true, |(b, _)| score > *b) {
            best = Some((score, pts));
        }
    }
    let (_, points) = best.expect("at least one candidate");
    Ok(Design {
        points,
        seed,
        n_candidates,
    })
}

/// Smallest Euclidean distance between any two design points.
pub fn min_pairwise_distance<T: Real>(design: &Design<T>) -> Result<T> {
    if design.len() < 2 {
        return Err(Error::InvalidArgument(
            "pairwise distance needs at least two points".into(),
        ));
    }
    Ok(min_distance_sq(&design.points).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn latin_holds(pts: &Matrix<f64>) -> bool {
        let n = pts.nrows();
        (0..pts.ncols()).all(|j| {
            let mut col = pts.col_to_vec(j);
            col.sort_by(|a, b| a.partial_cmp(b).unwrap());
            col.iter().enumerate().all(|(k, &x)| {
                x >= k as f64 / n as f64 && x < (k + 1) as f64 / n as f64
            })
        })
    }

    fn design_of(rows: &[&[f64]]) -> Design<f64> {
        Design {
            points: Matrix::from_rows(rows).unwrap(),
            seed: 0,
            n_candidates: 1,
        }
    }

    #[test]
    fn single_point() {
        let d = maximin_lhs::<f64>(1, 2, 5, 10).unwrap();
        assert_eq!(d.len(), 1);
        assert!(d.points.as_slice().iter().all(|&x| (0.0..1.0).contains(&x)));
    }

    #[test]
    fn four_points_one_per_quarter() {
        let d = maximin_lhs::<f64>(4, 1, 9, 20).unwrap();
        let mut col = d.points.col_to_vec(0);
        col.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (k, x) in col.iter().enumerate() {
            assert!(*x >= k as f64 * 0.25 && *x < (k + 1) as f64 * 0.25);
        }
    }

    #[test]
    fn maximin_beats_median_of_unoptimized_draws() {
        let seed = 2024;
        let best = maximin_lhs::<f64>(10, 2, seed, 100).unwrap();
        let mut singles: Vec<f64> = (0..100)
            .map(|c| {
                let mut rng = rng_from(derive_seed(seed, c));
                let pts = random_lhs::<f64, _>(10, 2, &mut rng);
                min_distance_sq(&pts).sqrt()
            })
            .collect();
        singles.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = 0.5 * (singles[49] + singles[50]);
        assert!(min_pairwise_distance(&best).unwrap() >= median);
    }

    #[test]
    fn degenerate_arguments() {
        assert!(maximin_lhs::<f64>(0, 2, 0, 1).is_err());
        assert!(maximin_lhs::<f64>(3, 0, 0, 1).is_err());
        assert!(maximin_lhs::<f64>(3, 2, 0, 0).is_err());
        assert!(min_pairwise_distance(&design_of(&[&[0.5]])).is_err());
    }

    #[test]
    fn pairwise_distance_values() {
        let d = design_of(&[&[0.0, 0.0], &[1.0, 1.0]]);
        assert!((min_pairwise_distance(&d).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        let d = design_of(&[&[0.0], &[0.5], &[1.0]]);
        assert_eq!(min_pairwise_distance(&d).unwrap(), 0.5);
    }

    #[test]
    fn pairwise_distance_matches_brute_force() {
        let mut rng = rng_from(77);
        let pts = Matrix::from_fn(20, 3, |_, _| rng.random::<f64>());
        let d = Design { points: pts.clone(), seed: 0, n_candidates: 1 };
        let mut brute = f64::INFINITY;
        for i in 0..20 {
            for j in 0..20 {
                if i != j {
                    let s: f64 = (0..3).map(|k| (pts[(i, k)] - pts[(j, k)]).powi(2)).sum();
                    brute = brute.min(s.sqrt());
                }
            }
        }
        assert!((min_pairwise_distance(&d).unwrap() - brute).abs() < 1e-15);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn latin_property_and_determinism(n in 1usize..40, d in 1usize..5, seed in any::<u64>(), k in 1usize..30) {
            let a = maximin_lhs::<f64>(n, d, seed, k).unwrap();
            prop_assert!(latin_holds(&a.points));
            let b = maximin_lhs::<f64>(n, d, seed, k).unwrap();
            prop_assert_eq!(a.points.as_slice(), b.points.as_slice());
        }

        #[test]
        fn more_candidates_never_worse(n in 2usize..30, d in 1usize..4, seed in any::<u64>(), k in 2usize..50) {
            let one = maximin_lhs::<f64>(n, d, seed, 1).unwrap();
            let many = maximin_lhs::<f64>(n, d, seed, k).unwrap();
            prop_assert!(min_pairwise_distance(&many).unwrap() >= min_pairwise_distance(&one).unwrap());
        }
    }
}
