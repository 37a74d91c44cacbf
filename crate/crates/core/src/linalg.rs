//! Small dense linear algebra: row-major matrices, Cholesky factorisation and
//! a symmetric eigensolver (Householder tridiagonalisation followed by
//! implicit QL, after the EISPACK `tred2`/`tql2` pair).

use crate::error::{Error, Result};
use crate::scalar::{dot, matmul, sq_norm, Real, Trans};

/// Dense matrices above this order are refused.
pub const DENSE_LIMIT: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T = f64> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = T::one();
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch { expected: rows * cols, got: data.len() });
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_diagonal(diag: &[T]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m.data[i * diag.len() + i] = v;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn trace(&self) -> T {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).sum()
    }

    /// Largest `|a_ij - a_ji|`; errors on a non-square matrix.
    pub fn asymmetry(&self) -> Result<T> {
        if self.rows != self.cols {
            return Err(Error::DimensionMismatch { expected: self.rows, got: self.cols });
        }
        let mut worst = T::zero();
        for i in 0..self.rows {
            for j in 0..i {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        Ok(worst)
    }

    /// `self + lambda * I`.
    pub fn add_diagonal(&self, lambda: T) -> Self {
        let mut m = self.clone();
        for i in 0..self.rows.min(self.cols) {
            m.data[i * self.cols + i] += lambda;
        }
        m
    }

    pub fn scaled(&self, s: T) -> Self {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&v| v * s).collect() }
    }

    pub fn mat_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(v.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.get(i, j);
            }
        }
        t
    }

    /// `A^T A / scale` for a row-major `A` (`m x n`), i.e. an averaged Gram matrix.
    pub fn gram(a: &[T], m: usize, n: usize, scale: T) -> Self {
        let mut out = Self::zeros(n, n);
        matmul(n, m, n, T::one() / scale, a, Trans::Yes, a, Trans::No, T::zero(), &mut out.data);
        // symmetrise away rounding differences between the two triangles
        for i in 0..n {
            for j in 0..i {
                let avg = (out.data[i * n + j] + out.data[j * n + i]) * T::lit(0.5);
                out.data[i * n + j] = avg;
                out.data[j * n + i] = avg;
            }
        }
        out
    }
}

/// Lower-triangular Cholesky factor `A = L L^T` of a symmetric positive
/// definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky<T = f64> {
    n: usize,
    l: Vec<T>,
}

impl<T: Real> Cholesky<T> {
    pub fn factor(a: &Matrix<T>) -> Result<Self> {
        if a.rows != a.cols {
            return Err(Error::DimensionMismatch { expected: a.rows, got: a.cols });
        }
        let n = a.rows;
        if n > DENSE_LIMIT {
            return Err(Error::TooLarge { dim: n, limit: DENSE_LIMIT });
        }
        let mut l = vec![T::zero(); n * n];
        for i in 0..n {
            for j in 0..=i {
                let s = dot(&l[i * n..i * n + j], &l[j * n..j * n + j]);
                let v = a.data[i * n + j] - s;
                if i == j {
                    if !(v > T::zero()) || !v.is_finite() {
                        return Err(Error::NotPositiveDefinite { row: i, pivot: v.to_f64_lossy() });
                    }
                    l[i * n + i] = v.sqrt();
                } else {
                    l[i * n + j] = v / l[j * n + j];
                }
            }
        }
        Ok(Cholesky { n, l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn lower(&self) -> Matrix<T> {
        Matrix { rows: self.n, cols: self.n, data: self.l.clone() }
    }

    /// Solves `L y = b`.
    pub fn solve_lower(&self, b: &[T]) -> Vec<T> {
        let n = self.n;
        assert_eq!(b.len(), n);
        let mut y = b.to_vec();
        for i in 0..n {
            let s = dot(&self.l[i * n..i * n + i], &y[..i]);
            y[i] = (y[i] - s) / self.l[i * n + i];
        }
        y
    }

    /// Solves `L^T x = y`.
    pub fn solve_upper(&self, y: &[T]) -> Vec<T> {
        let n = self.n;
        assert_eq!(y.len(), n);
        let mut x = y.to_vec();
        for i in (0..n).rev() {
            let xi = x[i] / self.l[i * n + i];
            x[i] = xi;
            for k in 0..i {
                x[k] -= self.l[i * n + k] * xi;
            }
        }
        x
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        self.solve_upper(&self.solve_lower(b))
    }

    /// `b^T A^{-1} b = |L^{-1} b|^2`.
    pub fn inv_quad_form(&self, b: &[T]) -> T {
        sq_norm(&self.solve_lower(b))
    }

    /// Explicit `L^{-1}` (lower triangular).
    pub fn lower_inverse(&self) -> Matrix<T> {
        let n = self.n;
        let mut inv = vec![T::zero(); n * n];
        for j in 0..n {
            inv[j * n + j] = T::one() / self.l[j * n + j];
            for i in j + 1..n {
                let mut s = T::zero();
                for k in j..i {
                    s += self.l[i * n + k] * inv[k * n + j];
                }
                inv[i * n + j] = -s / self.l[i * n + i];
            }
        }
        Matrix { rows: n, cols: n, data: inv }
    }

    /// `log det A`.
    pub fn log_det(&self) -> T {
        (0..self.n).map(|i| self.l[i * self.n + i].ln()).sum::<T>() * T::lit(2.0)
    }
}

/// `b_i^T A^{-1} b_i` for every row of the row-major `m x n` matrix `bs`,
/// batched through `L^{-1}`.
pub fn batch_inv_quad_forms<T: Real>(lower_inverse: &Matrix<T>, bs: &[T], m: usize) -> Vec<T> {
    let n = lower_inverse.rows;
    assert_eq!(bs.len(), m * n);
    const CHUNK: usize = 512;
    let mut out = Vec::with_capacity(m);
    let mut y = vec![T::zero(); CHUNK.min(m.max(1)) * n];
    for start in (0..m).step_by(CHUNK) {
        let rows = CHUNK.min(m - start);
        let yb = &mut y[..rows * n];
        matmul(rows, n, n, T::one(), &bs[start * n..(start + rows) * n], Trans::No, &lower_inverse.data, Trans::Yes, T::zero(), yb);
        out.extend(yb.chunks_exact(n).map(sq_norm));
    }
    out
}

/// Eigenvalues (ascending) of a symmetric matrix.
pub fn symmetric_eigenvalues<T: Real>(a: &Matrix<T>, tol: T) -> Result<Vec<T>> {
    Ok(symmetric_eigen_impl(a, tol, false)?.0)
}

/// Eigenvalues (ascending) and the matching orthonormal eigenvectors, stored
/// as the columns of the returned matrix.
pub fn symmetric_eigen<T: Real>(a: &Matrix<T>, tol: T) -> Result<(Vec<T>, Matrix<T>)> {
    let (vals, vecs) = symmetric_eigen_impl(a, tol, true)?;
    Ok((vals, vecs.expect("vectors requested")))
}

fn symmetric_eigen_impl<T: Real>(a: &Matrix<T>, tol: T, want_vectors: bool) -> Result<(Vec<T>, Option<Matrix<T>>)> {
    let asym = a.asymmetry()?;
    if asym > tol {
        return Err(Error::NotSymmetric(asym.to_f64_lossy()));
    }
    let n = a.rows;
    if n > DENSE_LIMIT {
        return Err(Error::TooLarge { dim: n, limit: DENSE_LIMIT });
    }
    if n == 0 {
        return Ok((Vec::new(), want_vectors.then(|| Matrix::zeros(0, 0))));
    }
    let mut v = a.data.clone();
    let mut d = vec![T::zero(); n];
    let mut e = vec![T::zero(); n];
    tred2(n, &mut v, &mut d, &mut e, want_vectors);
    tql2(n, &mut v, &mut d, &mut e, want_vectors)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[i].partial_cmp(&d[j]).expect("finite eigenvalues"));
    let vals: Vec<T> = order.iter().map(|&i| d[i]).collect();
    let vecs = want_vectors.then(|| {
        let mut m = Matrix::zeros(n, n);
        for (dst, &src) in order.iter().enumerate() {
            for r in 0..n {
                m.data[r * n + dst] = v[r * n + src];
            }
        }
        m
    });
    Ok((vals, vecs))
}

/// Householder reduction to tridiagonal form. On exit `d` holds the diagonal
/// and `e[1..]` the subdiagonal; `v` the accumulated transform when requested.
fn tred2<T: Real>(n: usize, v: &mut [T], d: &mut [T], e: &mut [T], want_vectors: bool) {
    let ix = |i: usize, j: usize| i * n + j;
    for j in 0..n {
        d[j] = v[ix(n - 1, j)];
    }
    for i in (1..n).rev() {
        let mut scale = T::zero();
        let mut h = T::zero();
        for k in 0..i {
            scale += d[k].abs();
        }
        if scale == T::zero() {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[ix(i - 1, j)];
                v[ix(i, j)] = T::zero();
                v[ix(j, i)] = T::zero();
            }
        } else {
            for k in 0..i {
                d[k] /= scale;
                h += d[k] * d[k];
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > T::zero() {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = T::zero();
            }
            for j in 0..i {
                f = d[j];
                v[ix(j, i)] = f;
                g = e[j] + v[ix(j, j)] * f;
                for k in j + 1..i {
                    g += v[ix(k, j)] * d[k];
                    e[k] += v[ix(k, j)] * f;
                }
                e[j] = g;
            }
            f = T::zero();
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[ix(k, j)] -= f * e[k] + g * d[k];
                }
                d[j] = v[ix(i - 1, j)];
                v[ix(i, j)] = T::zero();
            }
        }
        d[i] = h;
    }

    if !want_vectors {
        for i in 0..n {
            d[i] = v[ix(i, i)];
        }
        e[0] = T::zero();
        return;
    }

    for i in 0..n - 1 {
        v[ix(n - 1, i)] = v[ix(i, i)];
        v[ix(i, i)] = T::one();
        let h = d[i + 1];
        if h != T::zero() {
            for k in 0..=i {
                d[k] = v[ix(k, i + 1)] / h;
            }
            for j in 0..=i {
                let mut g = T::zero();
                for k in 0..=i {
                    g += v[ix(k, i + 1)] * v[ix(k, j)];
                }
                for k in 0..=i {
                    v[ix(k, j)] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[ix(k, i + 1)] = T::zero();
        }
    }
    for j in 0..n {
        d[j] = v[ix(n - 1, j)];
        v[ix(n - 1, j)] = T::zero();
    }
    v[ix(n - 1, n - 1)] = T::one();
    e[0] = T::zero();
}

/// Implicit QL iterations on the tridiagonal form produced by [`tred2`].
fn tql2<T: Real>(n: usize, v: &mut [T], d: &mut [T], e: &mut [T], want_vectors: bool) -> Result<()> {
    let ix = |i: usize, j: usize| i * n + j;
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = T::zero();

    let mut f = T::zero();
    let mut tst1 = T::zero();
    let eps = T::epsilon();
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m == n {
            m = n - 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > 60 {
                    return Err(Error::Degenerate("QL iteration did not converge".into()));
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (T::lit(2.0) * e[l]);
                let mut r = p.hypot(T::one());
                if p < T::zero() {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = T::one();
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = T::zero();
                let mut s2 = T::zero();
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    if want_vectors {
                        for k in 0..n {
                            h = v[ix(k, i + 1)];
                            v[ix(k, i + 1)] = s * v[ix(k, i)] + c * h;
                            v[ix(k, i)] = c * v[ix(k, i)] - s * h;
                        }
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = T::zero();
    }
    if d.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("eigenvalues"));
    }
    Ok(())
}
