//! Small dense linear algebra generic over [`Real`].
//!
//! Dimensions here are tiny (n ≤ ~6), so everything is plain row-major
//! storage with O(n³) loops. `nalgebra` is used only for `f64`
//! diagnostics (eigenvalues, singular values).

use std::ops::{Index, IndexMut};

use nalgebra::DMatrix;

use crate::real::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct Mat<S> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

impl<S: Real> Mat<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![S::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| S::cst(if i == j { 1.0 } else { 0.0 }))
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> S) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Matrix whose columns are the given vectors.
    pub fn from_columns(cols: &[Vec<S>]) -> Self {
        let rows = cols.first().map_or(0, Vec::len);
        Self::from_fn(rows, cols.len(), |i, j| cols[j][i])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn column(&self, j: usize) -> Vec<S> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows);
        Self::from_fn(self.rows, other.cols, |i, j| {
            let mut acc = S::zero();
            for k in 0..self.cols {
                acc += self[(i, k)] * other[(k, j)];
            }
            acc
        })
    }

    pub fn mul_vec(&self, v: &[S]) -> Vec<S> {
        assert_eq!(self.cols, v.len());
        (0..self.rows)
            .map(|i| {
                let mut acc = S::zero();
                for k in 0..self.cols {
                    acc += self[(i, k)] * v[k];
                }
                acc
            })
            .collect()
    }

    /// `uᵀ A v`.
    pub fn bilinear(&self, u: &[S], v: &[S]) -> S {
        let mut acc = S::zero();
        for i in 0..self.rows {
            let mut row = S::zero();
            for j in 0..self.cols {
                row += self[(i, j)] * v[j];
            }
            acc += u[i] * row;
        }
        acc
    }

    pub fn map<T: Real>(&self, f: impl Fn(S) -> T) -> Mat<T> {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn to_f64(&self) -> Mat<f64> {
        self.map(Real::re)
    }

    /// Row-major entries.
    pub fn as_slice(&self) -> &[S] {
        &self.data
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<S>) -> Self {
        assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }
}

/// `out = a b` for square row-major `n×n` slices.
pub fn square_mul<S: Real>(n: usize, a: &[S], b: &[S], out: &mut [S]) {
    for (orow, arow) in out.chunks_exact_mut(n).zip(a.chunks_exact(n)) {
        orow.fill(S::zero());
        for (&aik, brow) in arow.iter().zip(b.chunks_exact(n)) {
            for (o, &bkj) in orow.iter_mut().zip(brow) {
                *o += aik * bkj;
            }
        }
    }
}

/// `out = aᵀ b` for square row-major `n×n` slices.
pub fn square_tmul<S: Real>(n: usize, a: &[S], b: &[S], out: &mut [S]) {
    out.fill(S::zero());
    for (arow, brow) in a.chunks_exact(n).zip(b.chunks_exact(n)) {
        for (&aki, orow) in arow.iter().zip(out.chunks_exact_mut(n)) {
            for (o, &bkj) in orow.iter_mut().zip(brow) {
                *o += aki * bkj;
            }
        }
    }
}

impl Mat<f64> {
    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    pub fn from_dmatrix(m: &DMatrix<f64>) -> Self {
        Self::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl<S> Index<(usize, usize)> for Mat<S> {
    type Output = S;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &S {
        &self.data[i * self.cols + j]
    }
}

impl<S> IndexMut<(usize, usize)> for Mat<S> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut S {
        &mut self.data[i * self.cols + j]
    }
}

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`, or `None` when a
/// pivot is not positive (judged on primal parts).
pub fn cholesky<S: Real>(a: &Mat<S>) -> Option<Mat<S>> {
    let n = a.rows();
    let mut l = Mat::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d.re() > 0.0) {
            return None;
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Some(l)
}

/// Solve `L Lᵀ x = b` given the Cholesky factor.
pub fn cholesky_solve<S: Real>(l: &Mat<S>, b: &[S]) -> Vec<S> {
    let n = l.rows();
    let mut y = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            let t = l[(i, k)] * y[k];
            y[i] -= t;
        }
        y[i] = y[i] / l[(i, i)];
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            let t = l[(k, i)] * y[k];
            y[i] -= t;
        }
        y[i] = y[i] / l[(i, i)];
    }
    y
}

/// Inverse of an SPD matrix through its Cholesky factor.
pub fn spd_inverse<S: Real>(a: &Mat<S>) -> Option<Mat<S>> {
    let l = cholesky(a)?;
    let n = a.rows();
    let cols: Vec<Vec<S>> = (0..n)
        .map(|j| {
            let e: Vec<S> = (0..n).map(|i| S::cst(if i == j { 1.0 } else { 0.0 })).collect();
            cholesky_solve(&l, &e)
        })
        .collect();
    Some(Mat::from_columns(&cols))
}

pub fn axpy<S: Real>(a: S, x: &[S], y: &mut [S]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

pub fn scaled<S: Real>(a: S, x: &[S]) -> Vec<S> {
    x.iter().map(|&v| a * v).collect()
}

pub fn sub<S: Real>(x: &[S], y: &[S]) -> Vec<S> {
    x.iter().zip(y).map(|(&a, &b)| a - b).collect()
}

pub fn add<S: Real>(x: &[S], y: &[S]) -> Vec<S> {
    x.iter().zip(y).map(|(&a, &b)| a + b).collect()
}

pub fn dot<S: Real>(x: &[S], y: &[S]) -> S {
    let mut acc = S::zero();
    for (&a, &b) in x.iter().zip(y) {
        acc += a * b;
    }
    acc
}

pub fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// g-norm `sqrt(vᵀ G v)` for an `f64` metric.
pub fn g_norm(g: &Mat<f64>, v: &[f64]) -> f64 {
    g.bilinear(v, v).max(0.0).sqrt()
}

/// Orthonormalize `v` against the already g-orthonormal `basis`, returning
/// the normalized residual and the residual's norm before normalization.
pub fn g_orthonormalize<S: Real>(g: &Mat<S>, basis: &[Vec<S>], v: &[S]) -> (Vec<S>, S) {
    let mut w = v.to_vec();
    // two passes of modified Gram–Schmidt for stability
    for _ in 0..2 {
        for b in basis {
            let c = g.bilinear(b, &w);
            axpy(-c, b, &mut w);
        }
    }
    let nrm = g.bilinear(&w, &w).sqrt();
    let out = w.iter().map(|&x| x / nrm).collect();
    (out, nrm)
}

/// Smallest eigenvalue of a symmetric `f64` matrix.
pub fn min_eigenvalue(a: &Mat<f64>) -> f64 {
    a.to_dmatrix()
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Singular values of an arbitrary `f64` matrix, descending.
pub fn singular_values(a: &Mat<f64>) -> Vec<f64> {
    let mut s: Vec<f64> = a.to_dmatrix().singular_values().iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}
