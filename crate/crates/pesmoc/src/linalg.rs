//! Small dense linear algebra kit: row-major matrices, Cholesky with a
//! jitter ladder, and triangular solves. Everything here is sized for the
//! joints this crate builds (a few hundred rows at most), so clarity wins
//! over blocking and the layout stays simple.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Serialize", deserialize = "S: Deserialize<'de>"))]
pub struct Matrix<S> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

impl<S: Scalar> Matrix<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![S::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = S::one();
        }
        m
    }

    pub fn from_rows(rows: &[Vec<S>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Matrix { rows: r, cols: c, data }
    }

    /// Build an `n x n` matrix from a symmetric generator, evaluating only
    /// the lower triangle.
    pub fn from_symmetric(n: usize, mut f: impl FnMut(usize, usize) -> S) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = f(i, j);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[S] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [S] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[S] {
        &self.data
    }

    /// `self * v` for a column vector `v`.
    pub fn mat_vec(&self, v: &[S]) -> Vec<S> {
        assert_eq!(v.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    /// `self^T * v`.
    pub fn mat_t_vec(&self, v: &[S]) -> Vec<S> {
        assert_eq!(v.len(), self.rows);
        let mut out = vec![S::zero(); self.cols];
        for i in 0..self.rows {
            let vi = v[i];
            for (o, &m) in out.iter_mut().zip(self.row(i)) {
                *o = *o + vi * m;
            }
        }
        out
    }

    /// Symmetric rank-1 downdate/update `self += scale * w w^T`.
    pub fn rank1_update(&mut self, scale: S, w: &[S]) {
        assert_eq!(self.rows, self.cols);
        assert_eq!(w.len(), self.rows);
        for i in 0..self.rows {
            let wi = w[i];
            let row = self.row_mut(i);
            for (j, &wj) in w.iter().enumerate() {
                row[j] = row[j] + scale * wi * wj;
            }
        }
    }

    /// Quadratic form `u^T self v`.
    pub fn quad_form(&self, u: &[S], v: &[S]) -> S {
        assert_eq!(u.len(), self.rows);
        assert_eq!(v.len(), self.cols);
        let mut acc = S::zero();
        for i in 0..self.rows {
            acc = acc + u[i] * dot(self.row(i), v);
        }
        acc
    }
}

impl<S> std::ops::Index<(usize, usize)> for Matrix<S> {
    type Output = S;

    fn index(&self, (i, j): (usize, usize)) -> &S {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl<S> std::ops::IndexMut<(usize, usize)> for Matrix<S> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut S {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

pub fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// Lower-triangular Cholesky factor together with the jitter that made the
/// factorization succeed (zero when none was needed).
#[derive(Debug, Clone)]
pub struct Cholesky<S> {
    pub l: Matrix<S>,
    pub jitter: S,
}

impl<S: Scalar> Cholesky<S> {
    /// Solve `L x = b`.
    pub fn solve_lower(&self, b: &[S]) -> Vec<S> {
        let n = self.l.rows();
        assert_eq!(b.len(), n);
        let mut x = b.to_vec();
        for i in 0..n {
            let row = self.l.row(i);
            let mut acc = x[i];
            for j in 0..i {
                acc = acc - row[j] * x[j];
            }
            x[i] = acc / row[i];
        }
        x
    }

    /// Solve `L^T x = b`.
    pub fn solve_lower_transpose(&self, b: &[S]) -> Vec<S> {
        let n = self.l.rows();
        assert_eq!(b.len(), n);
        let mut x = b.to_vec();
        for i in (0..n).rev() {
            let mut acc = x[i];
            for j in i + 1..n {
                acc = acc - self.l[(j, i)] * x[j];
            }
            x[i] = acc / self.l[(i, i)];
        }
        x
    }

    /// Solve `A x = b` where `A = L L^T`.
    pub fn solve(&self, b: &[S]) -> Vec<S> {
        self.solve_lower_transpose(&self.solve_lower(b))
    }

    /// `log det A = 2 sum log L_ii`.
    pub fn log_det(&self) -> S {
        let n = self.l.rows();
        let mut acc = S::zero();
        for i in 0..n {
            acc = acc + self.l[(i, i)].ln();
        }
        acc + acc
    }
}

/// Plain Cholesky; fails if the matrix is not numerically positive definite.
pub fn cholesky<S: Scalar>(a: &Matrix<S>) -> Result<Cholesky<S>> {
    cholesky_with_jitter(a, S::zero()).map(|mut c| {
        c.jitter = S::zero();
        c
    })
}

fn cholesky_with_jitter<S: Scalar>(a: &Matrix<S>, jitter: S) -> Result<Cholesky<S>> {
    let n = a.rows();
    assert_eq!(a.cols(), n, "cholesky needs a square matrix");
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut acc = a[(i, j)];
            if i == j {
                acc = acc + jitter;
            }
            for k in 0..j {
                acc = acc - l[(i, k)] * l[(j, k)];
            }
            if i == j {
                if acc <= S::zero() || !acc.is_finite() {
                    return Err(Error::Numerical(format!(
                        "cholesky pivot {acc} at row {i} (n = {n})"
                    )));
                }
                l[(i, i)] = acc.sqrt();
            } else {
                l[(i, j)] = acc / l[(j, j)];
            }
        }
    }
    Ok(Cholesky { l, jitter })
}

/// Cholesky with an escalating diagonal jitter: try the matrix as given,
/// then add `10^-10 .. 10^-6` times the mean diagonal until a factorization
/// succeeds. The jitter that worked is recorded on the result.
pub fn cholesky_jittered<S: Scalar>(a: &Matrix<S>) -> Result<Cholesky<S>> {
    let n = a.rows();
    if n == 0 {
        return Ok(Cholesky { l: Matrix::zeros(0, 0), jitter: S::zero() });
    }
    if let Ok(c) = cholesky_with_jitter(a, S::zero()) {
        return Ok(c);
    }
    let mut diag_scale = S::zero();
    for i in 0..n {
        diag_scale = diag_scale + a[(i, i)].abs();
    }
    diag_scale = diag_scale / S::c(n as f64);
    if diag_scale <= S::zero() {
        diag_scale = S::one();
    }
    let mut rel = S::c(1e-10);
    let rel_max = S::c(1e-6);
    loop {
        let jitter = rel * diag_scale;
        if let Ok(c) = cholesky_with_jitter(a, jitter) {
            return Ok(c);
        }
        rel = rel * S::c(10.0);
        if rel > rel_max * S::c(1.0 + 1e-9) {
            return Err(Error::Numerical(format!(
                "matrix not positive definite even with jitter {} (n = {n})",
                rel_max * diag_scale
            )));
        }
    }
}
