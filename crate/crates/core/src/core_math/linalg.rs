//! Dense row-major matrices and the Cholesky factor-and-solve routines every
//! Gaussian process layer relies on. Nothing here forms an explicit inverse
//! except [`CholFactor::inverse`], which the gradient code needs for trace terms.

use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                context: "Matrix::from_vec",
                expected: rows * cols,
                actual: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from equally long rows. An empty slice gives a 0x0 matrix.
    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    context: "Matrix::from_rows",
                    expected: cols,
                    actual: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Single column matrix holding `v`.
    pub fn column(v: &[T]) -> Self {
        Self {
            rows: v.len(),
            cols: 1,
            data: v.to_vec(),
        }
    }

    #[inline]
    pub fn nrows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn ncols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn rows_iter(&self) -> impl Iterator<Item = &[T]> {
        // chunks_exact panics on a zero chunk size
        (0..self.rows).map(move |i| self.row(i))
    }

    pub fn col_to_vec(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    /// Rows selected by `idx`, in that order.
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    /// Stacks `other` below `self`.
    pub fn vstack(&self, other: &Self) -> Result<Self> {
        if self.rows > 0 && other.rows > 0 && self.cols != other.cols {
            return Err(Error::DimensionMismatch {
                context: "Matrix::vstack",
                expected: self.cols,
                actual: other.cols,
            });
        }
        let cols = if self.rows > 0 { self.cols } else { other.cols };
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(Self {
            rows: self.rows + other.rows,
            cols,
            data,
        })
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                context: "Matrix::matmul",
                expected: self.cols,
                actual: other.rows,
            });
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == T::zero() {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, v: &[T]) -> Result<Vec<T>> {
        if self.cols != v.len() {
            return Err(Error::DimensionMismatch {
                context: "Matrix::matvec",
                expected: self.cols,
                actual: v.len(),
            });
        }
        Ok(self.rows_iter().map(|r| dot(r, v)).collect())
    }

    pub fn add_diagonal(&mut self, value: T) {
        for i in 0..self.rows.min(self.cols) {
            self[(i, i)] += value;
        }
    }

    pub fn add_diagonal_vec(&mut self, values: &[T]) -> Result<()> {
        if values.len() != self.rows.min(self.cols) {
            return Err(Error::DimensionMismatch {
                context: "Matrix::add_diagonal_vec",
                expected: self.rows.min(self.cols),
                actual: values.len(),
            });
        }
        for (i, &v) in values.iter().enumerate() {
            self[(i, i)] += v;
        }
        Ok(())
    }

    pub fn frobenius_norm(&self) -> T {
        self.data.iter().map(|&x| x * x).sum::<T>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Largest absolute asymmetry `|M[i,j] - M[j,i]|` and where it occurs.
    fn max_asymmetry(&self) -> (usize, usize, T) {
        let mut worst = (0, 0, T::zero());
        for i in 0..self.rows {
            for j in 0..i {
                let d = (self[(i, j)] - self[(j, i)]).abs();
                if d > worst.2 {
                    worst = (i, j, d);
                }
            }
        }
        worst
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn cast<U: Real>(&self) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| U::lit(x.as_f64())).collect(),
        }
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

/// Inner product over the common prefix of `a` and `b`.
///
/// Eight independent partial sums let the compiler vectorize the loop; a single
/// accumulator would serialize every addition.
#[inline]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [T::zero(); 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut s = ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]));
    for (&x, &y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

/// Lower Cholesky factor `L` with `L Lᵀ = M`, plus the cached log-determinant of `M`.
#[derive(Clone, Debug, PartialEq)]
pub struct CholFactor<T> {
    lower: Matrix<T>,
    log_det: T,
}

/// Symmetry tolerance accepted by [`cholesky`], relative to the largest entry.
const SYMMETRY_TOL: f64 = 1e-10;

/// Factorizes a symmetric positive-definite matrix.
///
/// Fails with [`Error::NotPositiveDefinite`] naming the first non-positive pivot.
pub fn cholesky<T: Real>(m: &Matrix<T>) -> Result<CholFactor<T>> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::DimensionMismatch {
            context: "cholesky (square)",
            expected: n,
            actual: m.ncols(),
        });
    }
    if !m.is_finite() {
        return Err(Error::NonFinite("cholesky input"));
    }
    let scale = m
        .as_slice()
        .iter()
        .fold(T::one(), |acc, x| acc.max(x.abs()));
    let (row, col, diff) = m.max_asymmetry();
    if diff > T::lit(SYMMETRY_TOL) * scale {
        return Err(Error::NotSymmetric {
            row,
            col,
            diff: diff.as_f64(),
        });
    }

    // Outer-product factorization of the upper triangle U = Lᵀ, stored row-major so
    // every update is a contiguous axpy. Pivots are taken in blocks of four and the
    // trailing rows receive one rank-4 update per block.
    let mut u = Matrix::zeros(n, n);
    for i in 0..n {
        u.row_mut(i)[i..].copy_from_slice(&m.row(i)[i..]);
    }
    let mut log_det = T::zero();
    let data = &mut u.data;
    let mut k = 0;
    while k < n {
        let width = BLOCK.min(n - k);
        for q in 0..width {
            let kk = k + q;
            let (head, tail) = data.split_at_mut(kk * n);
            let row = &mut tail[kk..n];
            for p in k..kk {
                let src = &head[p * n + kk..(p + 1) * n];
                axpy(row, -src[0], src);
            }
            let pivot = row[0];
            if !(pivot > T::zero()) || !pivot.is_finite() {
                return Err(Error::NotPositiveDefinite {
                    pivot: kk,
                    value: pivot.as_f64(),
                });
            }
            let d = pivot.sqrt();
            let inv = T::one() / d;
            for v in &mut row[1..] {
                *v *= inv;
            }
            row[0] = d;
            log_det += d.ln();
        }
        let next = k + width;
        let (head, tail) = data.split_at_mut(next * n);
        for mrow in next..n {
            let dst = &mut tail[(mrow - next) * n + mrow..(mrow - next + 1) * n];
            let src = |q: usize| &head[(k + q) * n + mrow..(k + q + 1) * n];
            if width == BLOCK {
                let (s0, s1, s2, s3) = (src(0), src(1), src(2), src(3));
                axpy4(dst, [-s0[0], -s1[0], -s2[0], -s3[0]], [s0, s1, s2, s3]);
            } else {
                for q in 0..width {
                    let sq = src(q);
                    axpy(dst, -sq[0], sq);
                }
            }
        }
        k = next;
    }
    Ok(CholFactor {
        lower: u.transpose(),
        log_det: log_det + log_det,
    })
}

/// Pivot block width of the factorization and inversion kernels.
const BLOCK: usize = 4;

/// `y += a x` over `y.len()` entries.
#[inline]
fn axpy<T: Real>(y: &mut [T], a: T, x: &[T]) {
    let x = &x[..y.len()];
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// `y += Σ_q a_q x_q`, one pass over `y` for four sources.
#[inline]
fn axpy4<T: Real>(y: &mut [T], a: [T; 4], x: [&[T]; 4]) {
    let n = y.len();
    let (x0, x1, x2, x3) = (&x[0][..n], &x[1][..n], &x[2][..n], &x[3][..n]);
    for i in 0..n {
        y[i] += a[0] * x0[i] + a[1] * x1[i] + a[2] * x2[i] + a[3] * x3[i];
    }
}

impl<T: Real> CholFactor<T> {
    #[inline]
    pub fn lower(&self) -> &Matrix<T> {
        &self.lower
    }

    #[inline]
    pub fn log_det(&self) -> T {
        self.log_det
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    /// Solves `L z = b` in place.
    pub fn forward_solve_in_place(&self, b: &mut [T]) {
        let n = self.dim();
        for i in 0..n {
            let row = self.lower.row(i);
            let s = b[i] - dot(&row[..i], &b[..i]);
            b[i] = s / row[i];
        }
    }

    /// Solves `Lᵀ x = z` in place.
    pub fn backward_solve_in_place(&self, b: &mut [T]) {
        let n = self.dim();
        for i in (0..n).rev() {
            let bi = b[i] / self.lower[(i, i)];
            b[i] = bi;
            let row = self.lower.row(i);
            for k in 0..i {
                b[k] -= row[k] * bi;
            }
        }
    }

    /// `M⁻¹ b` for a vector right-hand side.
    pub fn solve_vec(&self, b: &[T]) -> Result<Vec<T>> {
        if b.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "chol_solve (vector)",
                expected: self.dim(),
                actual: b.len(),
            });
        }
        let mut x = b.to_vec();
        self.forward_solve_in_place(&mut x);
        self.backward_solve_in_place(&mut x);
        Ok(x)
    }

    /// `M⁻¹ B` for a matrix right-hand side.
    pub fn solve_mat(&self, b: &Matrix<T>) -> Result<Matrix<T>> {
        if b.nrows() != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "chol_solve (matrix)",
                expected: self.dim(),
                actual: b.nrows(),
            });
        }
        let mut out = Matrix::zeros(b.nrows(), b.ncols());
        let mut col = vec![T::zero(); b.nrows()];
        for j in 0..b.ncols() {
            for (i, c) in col.iter_mut().enumerate() {
                *c = b[(i, j)];
            }
            self.forward_solve_in_place(&mut col);
            self.backward_solve_in_place(&mut col);
            for (i, &c) in col.iter().enumerate() {
                out[(i, j)] = c;
            }
        }
        Ok(out)
    }

    /// Squared norms of the columns of `L⁻¹ B`, i.e. `diag(Bᵀ M⁻¹ B)`.
    pub fn quad_diag(&self, b: &Matrix<T>) -> Result<Vec<T>> {
        if b.nrows() != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "CholFactor::quad_diag",
                expected: self.dim(),
                actual: b.nrows(),
            });
        }
        let mut col = vec![T::zero(); b.nrows()];
        Ok((0..b.ncols())
            .map(|j| {
                for (i, c) in col.iter_mut().enumerate() {
                    *c = b[(i, j)];
                }
                self.forward_solve_in_place(&mut col);
                dot(&col, &col)
            })
            .collect())
    }

    /// Explicit `M⁻¹`, used only for the trace terms of log-likelihood gradients.
    pub fn inverse(&self) -> Matrix<T> {
        let x = self.lower_inverse();
        let n = self.dim();
        // M⁻¹ = Xᵀ X accumulated as rank-1 updates with the rows of X (row k is
        // nonzero on ..=k); the lower triangle is built and then mirrored
        let mut s = Matrix::zeros(n, n);
        let xd = &x.data;
        let sd = &mut s.data;
        let row = |q: usize| &xd[q * n..q * n + q + 1];
        let mut k = 0;
        while k + BLOCK <= n {
            let rows = [row(k), row(k + 1), row(k + 2), row(k + 3)];
            for a in 0..=k {
                let f = [rows[0][a], rows[1][a], rows[2][a], rows[3][a]];
                axpy4(&mut sd[a * n..a * n + a + 1], f, rows);
            }
            for (q, r) in rows.iter().enumerate().skip(1) {
                for a in k + 1..=k + q {
                    axpy(&mut sd[a * n..a * n + a + 1], r[a], r);
                }
            }
            k += BLOCK;
        }
        for k in k..n {
            let r = row(k);
            for a in 0..=k {
                axpy(&mut sd[a * n..a * n + a + 1], r[a], r);
            }
        }
        for a in 0..n {
            for b in 0..a {
                sd[b * n + a] = sd[a * n + b];
            }
        }
        s
    }

    /// `L⁻¹`, lower triangular, by rows: row i is `(e_i − Σ_{k<i} L_ik X_k) / L_ii`.
    pub fn lower_inverse(&self) -> Matrix<T> {
        let n = self.dim();
        let l = &self.lower.data;
        let mut x = Matrix::zeros(n, n);
        let xd = &mut x.data;
        for i in 0..n {
            let (done, rest) = xd.split_at_mut(i * n);
            let row_i = &mut rest[..n];
            let li = &l[i * n..i * n + i];
            let src = |q: usize| &done[q * n..q * n + q + 1];
            let mut k = 0;
            while k + BLOCK <= i {
                // rows k..k+4 share the prefix ..=k; their tails are added one by one
                let f = [li[k], li[k + 1], li[k + 2], li[k + 3]];
                axpy4(&mut row_i[..=k], f, [src(k), src(k + 1), src(k + 2), src(k + 3)]);
                for kk in k + 1..k + BLOCK {
                    axpy(&mut row_i[k + 1..=kk], li[kk], &src(kk)[k + 1..]);
                }
                k += BLOCK;
            }
            for k in k..i {
                axpy(&mut row_i[..=k], li[k], src(k));
            }
            let inv = T::one() / l[i * n + i];
            for v in &mut row_i[..i] {
                *v *= -inv;
            }
            row_i[i] = inv;
        }
        x
    }

    /// `L Lᵀ`.
    pub fn reconstruct(&self) -> Matrix<T> {
        let n = self.dim();
        Matrix::from_fn(n, n, |i, j| {
            let k = i.min(j) + 1;
            dot(&self.lower.row(i)[..k], &self.lower.row(j)[..k])
        })
    }
}

/// Free-function form of [`CholFactor::solve_mat`].
pub fn chol_solve<T: Real>(factor: &CholFactor<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    factor.solve_mat(b)
}
