//! Dense row-major matrices and the symmetric kernels the estimators need:
//! Cholesky factorization, SPD solves and a cyclic Jacobi eigensolver.
//!
//! Matrices here are small (at most a few dozen rows on the symmetric paths),
//! so the kernels favour accuracy and simplicity over blocking or BLAS.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Index, IndexMut};

use crate::error::{Error, Result};
use crate::math;
use crate::tol;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(try_from = "RawMatrix"))]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

/// Unchecked wire form; deserialization goes through [`Matrix::new`].
#[cfg(feature = "serde")]
#[derive(serde::Deserialize)]
struct RawMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[cfg(feature = "serde")]
impl TryFrom<RawMatrix> for Matrix {
    type Error = Error;

    fn try_from(raw: RawMatrix) -> Result<Self> {
        Matrix::new(raw.rows, raw.cols, raw.data)
    }
}

impl Matrix {
    /// Builds a matrix from row-major entries, checking shape and finiteness.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch { context: "Matrix::new", expected: rows * cols, found: data.len() });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("matrix entries"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diag(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len(), d.len());
        for (i, &v) in d.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Stacks equally long rows. Panics on ragged input.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Self { rows: rows.len(), cols, data }
    }

    /// A single-column matrix.
    pub fn column(v: &[f64]) -> Self {
        Self { rows: v.len(), cols: 1, data: v.to_vec() }
    }

    /// `v vᵀ`.
    pub fn outer(a: &[f64], b: &[f64]) -> Self {
        Self::from_fn(a.len(), b.len(), |i, j| a[i] * b[j])
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn trace(&self) -> f64 {
        self.diag().iter().sum()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    /// Matrix product. Panics if the inner dimensions differ.
    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "matmul inner dimension");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let a = self.row(i);
            let o = out.row_mut(i);
            for (k, &aik) in a.iter().enumerate() {
                if aik == 0.0 {
                    continue;
                }
                for (oj, &bkj) in o.iter_mut().zip(other.row(k)) {
                    *oj += aik * bkj;
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len(), "mul_vec dimension");
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    /// `selfᵀ v`.
    pub fn tr_mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.rows, v.len(), "tr_mul_vec dimension");
        let mut out = vec![0.0; self.cols];
        for (i, &vi) in v.iter().enumerate() {
            axpy(vi, self.row(i), &mut out);
        }
        out
    }

    pub fn add(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Matrix { data, ..*self }
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Matrix { data, ..*self }
    }

    pub fn scale(&self, s: f64) -> Matrix {
        let data = self.data.iter().map(|a| a * s).collect();
        Matrix { data, ..*self }
    }

    pub fn add_assign(&mut self, other: &Matrix) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// `self += s · a bᵀ`.
    pub fn add_outer(&mut self, s: f64, a: &[f64], b: &[f64]) {
        assert_eq!((self.rows, self.cols), (a.len(), b.len()));
        for (i, &ai) in a.iter().enumerate() {
            axpy(s * ai, b, self.row_mut(i));
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.rows).map(|i| self.row(i).iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut m: f64 = 0.0;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                m = m.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        m
    }

    /// `(A + Aᵀ)/2` without any checks.
    pub fn symmetrized(&self) -> Matrix {
        let mut out = self.clone();
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                let v = 0.5 * (self[(i, j)] + self[(j, i)]);
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        out
    }

    /// Symmetrizes when the asymmetry is within [`tol::SYMMETRY`] (relative to
    /// `max(1, max|a|)`), rejects otherwise.
    pub fn checked_symmetric(&self) -> Result<Matrix> {
        if !self.is_square() {
            return Err(Error::NotSquare { rows: self.rows, cols: self.cols });
        }
        let asymmetry = self.max_asymmetry();
        if asymmetry > tol::SYMMETRY * self.max_abs().max(1.0) {
            return Err(Error::NotSymmetric { asymmetry });
        }
        Ok(self.symmetrized())
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `y += a x`.
#[inline]
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Lower-triangular `L` with `L Lᵀ = a`.
///
/// A pivot at or below `1e-14 · max(diag a)` is reported as
/// [`Error::NotPositiveDefinite`] carrying its index.
pub fn cholesky(a: &Matrix) -> Result<Matrix> {
    let a = a.checked_symmetric()?;
    let n = a.rows();
    let floor = tol::PIVOT_RELATIVE * a.diag().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let lj = &l.row(j)[..j];
        let d = a[(j, j)] - dot(lj, lj);
        if d.is_nan() || d <= floor {
            return Err(Error::NotPositiveDefinite { pivot: j });
        }
        let ljj = math::sqrt(d);
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let s = a[(i, j)] - dot(&l.row(i)[..j], &l.row(j)[..j]);
            l[(i, j)] = s / ljj;
        }
    }
    Ok(l)
}

/// Cholesky factor that also fails when a pivot drops below `rel · a_jj`,
/// i.e. when column `j` is (numerically) in the span of the preceding columns.
pub fn cholesky_relative(a: &Matrix, rel: f64) -> Result<Matrix> {
    let a = a.checked_symmetric()?;
    let n = a.rows();
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let lj = &l.row(j)[..j];
        let d = a[(j, j)] - dot(lj, lj);
        if d.is_nan() || d <= rel * a[(j, j)] || d <= 0.0 {
            return Err(Error::NotPositiveDefinite { pivot: j });
        }
        let ljj = math::sqrt(d);
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let s = a[(i, j)] - dot(&l.row(i)[..j], &l.row(j)[..j]);
            l[(i, j)] = s / ljj;
        }
    }
    Ok(l)
}

/// Solves `L Lᵀ x = b` in place for every column of `b`.
pub fn cholesky_solve(l: &Matrix, b: &Matrix) -> Matrix {
    let n = l.rows();
    assert_eq!(b.rows(), n, "cholesky_solve dimension");
    let mut x = b.clone();
    for c in 0..b.cols() {
        for i in 0..n {
            let mut s = x[(i, c)];
            for k in 0..i {
                s -= l[(i, k)] * x[(k, c)];
            }
            x[(i, c)] = s / l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = x[(i, c)];
            for k in (i + 1)..n {
                s -= l[(k, i)] * x[(k, c)];
            }
            x[(i, c)] = s / l[(i, i)];
        }
    }
    x
}

/// Solves `a x = b` for symmetric positive definite `a`.
pub fn solve_spd(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if b.rows() != a.rows() {
        return Err(Error::DimensionMismatch { context: "solve_spd", expected: a.rows(), found: b.rows() });
    }
    let l = cholesky(a)?;
    Ok(cholesky_solve(&l, b))
}

pub fn solve_spd_vec(a: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    Ok(solve_spd(a, &Matrix::column(b))?.into_vec())
}

pub fn inverse_spd(a: &Matrix) -> Result<Matrix> {
    let inv = solve_spd(a, &Matrix::identity(a.rows()))?;
    Ok(inv.symmetrized())
}

/// `a⁻¹ b a⁻¹` for SPD `a` and symmetric `b`, symmetrized.
pub fn sandwich(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    let l = cholesky(a)?;
    let left = cholesky_solve(&l, b);
    let both = cholesky_solve(&l, &left.transpose());
    Ok(both.symmetrized())
}

/// Least-squares solution of `a x ≈ b` by Householder QR; `a` needs full
/// column rank. A zero column norm in the reduction is reported as
/// [`Error::NotPositiveDefinite`] at that column.
pub fn lstsq(a: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    let (n, q) = (a.rows(), a.cols());
    if b.len() != n {
        return Err(Error::DimensionMismatch { context: "lstsq right-hand side", expected: n, found: b.len() });
    }
    if q > n {
        return Err(Error::DimensionMismatch { context: "lstsq rows (need at least one per column)", expected: q, found: n });
    }
    let mut cols: Vec<Vec<f64>> = (0..q).map(|j| a.col(j)).collect();
    let mut y = b.to_vec();
    let mut r = Matrix::zeros(q, q);
    for j in 0..q {
        let norm = math::sqrt(cols[j][j..].iter().map(|v| v * v).sum());
        if norm.is_nan() || norm <= 0.0 {
            return Err(Error::NotPositiveDefinite { pivot: j });
        }
        let diag = if cols[j][j] > 0.0 { -norm } else { norm };
        let mut v = cols[j][j..].to_vec();
        v[0] -= diag;
        let vv = dot(&v, &v);
        if vv > 0.0 {
            for col in cols.iter_mut().skip(j + 1).chain(core::iter::once(&mut y)) {
                let f = 2.0 * dot(&v, &col[j..]) / vv;
                axpy(-f, &v, &mut col[j..]);
            }
        }
        r[(j, j)] = diag;
        for k in (j + 1)..q {
            r[(j, k)] = cols[k][j];
        }
    }
    let mut x = vec![0.0; q];
    for i in (0..q).rev() {
        let mut s = y[i];
        for k in (i + 1)..q {
            s -= r[(i, k)] * x[k];
        }
        x[i] = s / r[(i, i)];
    }
    Ok(x)
}

/// Eigen-decomposition of a symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymEigen {
    /// Sorted descending.
    pub values: Vec<f64>,
    /// Column `k` is the eigenvector for `values[k]`; its first component of
    /// non-negligible magnitude is positive.
    pub vectors: Matrix,
}

/// Cyclic Jacobi eigensolver.
pub fn sym_eigen(a: &Matrix) -> Result<SymEigen> {
    let mut a = a.checked_symmetric()?;
    let n = a.rows();
    let mut v = Matrix::identity(n);
    let frob = math::sqrt(a.as_slice().iter().map(|x| x * x).sum::<f64>());

    for _ in 0..tol::JACOBI_MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[(p, q)] * a[(p, q)];
            }
        }
        if math::sqrt(2.0 * off) <= tol::JACOBI_OFF_DIAGONAL * frob {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    let t = 1.0 / (theta.abs() + math::hypot(theta, 1.0));
                    if theta < 0.0 {
                        -t
                    } else {
                        t
                    }
                };
                let c = 1.0 / math::hypot(t, 1.0);
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let diag = a.diag();
    order.sort_by(|&i, &j| diag[j].total_cmp(&diag[i]));
    let values = order.iter().map(|&i| diag[i]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (k, &src) in order.iter().enumerate() {
        let col = v.col(src);
        let sign = col.iter().find(|x| x.abs() > 1e-12).map_or(1.0, |x| x.signum());
        for i in 0..n {
            vectors[(i, k)] = sign * col[i];
        }
    }
    Ok(SymEigen { values, vectors })
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(a: &Matrix) -> Result<f64> {
    Ok(sym_eigen(a)?.values.last().copied().unwrap_or(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lstsq_exact_system() {
        let a = Matrix::new(3, 3, vec![2.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 4.0]).unwrap();
        let x = [0.5, -1.25, 2.0];
        let b = a.mul_vec(&x);
        let got = lstsq(&a, &b).unwrap();
        for (g, e) in got.iter().zip(x) {
            assert!((g - e).abs() < 1e-14);
        }
    }

    #[test]
    fn lstsq_matches_normal_equations() {
        let a = Matrix::from_fn(7, 3, |i, j| ((i * 3 + j) as f64 * 0.7).sin() + if i == j { 1.0 } else { 0.0 });
        let b: Vec<f64> = (0..7).map(|i| (i as f64 * 1.3).cos()).collect();
        let got = lstsq(&a, &b).unwrap();
        let ata = a.transpose().matmul(&a);
        let want = solve_spd_vec(&ata, &a.tr_mul_vec(&b)).unwrap();
        for (g, w) in got.iter().zip(want) {
            assert!((g - w).abs() < 1e-12);
        }
        let resid: Vec<f64> = a.mul_vec(&got).iter().zip(&b).map(|(f, y)| y - f).collect();
        for g in a.tr_mul_vec(&resid) {
            assert!(g.abs() < 1e-12);
        }
    }

    #[test]
    fn lstsq_zero_column() {
        let a = Matrix::new(3, 2, vec![1.0, 0.0, 2.0, 0.0, 3.0, 0.0]).unwrap();
        assert_eq!(lstsq(&a, &[1.0, 2.0, 3.0]), Err(Error::NotPositiveDefinite { pivot: 1 }));
    }
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> Matrix {
        let b = Matrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        b.matmul(&b.transpose()).add(&Matrix::identity(n).scale(1e-3))
    }

    fn random_sym(n: usize, rng: &mut ChaCha8Rng) -> Matrix {
        Matrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0)).symmetrized()
    }

    #[test]
    fn cholesky_identity() {
        let l = cholesky(&Matrix::identity(3)).unwrap();
        assert_eq!(l, Matrix::identity(3));
    }

    #[test]
    fn cholesky_two_by_two() {
        let a = Matrix::from_rows(&[[4.0, 2.0], [2.0, 3.0]]);
        let l = cholesky(&a).unwrap();
        let expected = Matrix::from_rows(&[[2.0, 0.0], [1.0, 2f64.sqrt()]]);
        assert!(l.sub(&expected).max_abs() < 1e-15);
        assert!(l.matmul(&l.transpose()).sub(&a).max_abs() < 1e-14);
    }

    #[test]
    fn cholesky_reconstructs_random_spd() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_spd(8, &mut rng);
        let l = cholesky(&a).unwrap();
        let err = l.matmul(&l.transpose()).sub(&a).max_abs();
        assert!(err < 1e-10 * a.max_abs(), "{err}");
        for i in 0..8 {
            for j in (i + 1)..8 {
                assert_eq!(l[(i, j)], 0.0);
            }
        }
    }

    #[test]
    fn cholesky_names_failing_pivot() {
        let a = Matrix::from_rows(&[[1.0, 0.0, 0.0], [0.0, 1.0, 2.0], [0.0, 2.0, 1.0]]);
        assert_eq!(cholesky(&a), Err(Error::NotPositiveDefinite { pivot: 2 }));
        let b = Matrix::from_rows(&[[-1.0, 0.0], [0.0, 1.0]]);
        assert_eq!(cholesky(&b), Err(Error::NotPositiveDefinite { pivot: 0 }));
    }

    #[test]
    fn asymmetric_input_is_rejected() {
        let a = Matrix::from_rows(&[[1.0, 0.5], [0.4, 1.0]]);
        assert!(matches!(sym_eigen(&a), Err(Error::NotSymmetric { .. })));
        assert!(matches!(cholesky(&a), Err(Error::NotSymmetric { .. })));
        // tiny asymmetry is symmetrized away
        let b = Matrix::from_rows(&[[2.0, 0.5], [0.5 + 1e-14, 2.0]]);
        assert!(cholesky(&b).is_ok());
    }

    #[test]
    fn eigen_identity_and_diagonal() {
        let e = sym_eigen(&Matrix::identity(4)).unwrap();
        assert_eq!(e.values, vec![1.0; 4]);

        let e = sym_eigen(&Matrix::from_diag(&[3.0, 1.0, 2.0])).unwrap();
        assert_eq!(e.values, vec![3.0, 2.0, 1.0]);
        // signed permutation: columns pick coordinates 0, 2, 1
        for (k, &coord) in [0usize, 2, 1].iter().enumerate() {
            for i in 0..3 {
                let expected = if i == coord { 1.0 } else { 0.0 };
                assert!((e.vectors[(i, k)].abs() - expected).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn eigen_residual_random_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = random_sym(9, &mut rng);
        let e = sym_eigen(&a).unwrap();
        let bound = 1e-8 * (1.0 + a.norm_inf());
        for k in 0..9 {
            let v = e.vectors.col(k);
            let av = a.mul_vec(&v);
            let res = av.iter().zip(&v).map(|(x, y)| (x - e.values[k] * y).abs()).fold(0.0, f64::max);
            assert!(res < bound, "residual {res}");
        }
        for w in e.values.windows(2) {
            assert!(w[0] >= w[1]);
        }
        let vtv = e.vectors.transpose().matmul(&e.vectors);
        assert!(vtv.sub(&Matrix::identity(9)).max_abs() < 1e-10);
    }

    #[test]
    fn solve_spd_cases() {
        let b = Matrix::from_rows(&[[1.0, -2.0], [3.5, 0.25]]);
        assert_eq!(solve_spd(&Matrix::identity(2), &b).unwrap(), b);

        let x = solve_spd_vec(&Matrix::from_diag(&[2.0, 4.0]), &[2.0, 8.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 2.0).abs() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let a = random_spd(12, &mut rng);
        let rhs = Matrix::from_fn(12, 3, |_, _| rng.random_range(-5.0..5.0));
        let x = solve_spd(&a, &rhs).unwrap();
        let res = a.matmul(&x).sub(&rhs).max_abs();
        assert!(res < 1e-9 * (1.0 + rhs.norm_inf()), "{res}");
    }

    #[test]
    fn solve_spd_rejects_singular() {
        let a = Matrix::from_rows(&[[1.0, 1.0], [1.0, 1.0]]);
        assert!(matches!(solve_spd(&a, &Matrix::column(&[1.0, 1.0])), Err(Error::NotPositiveDefinite { pivot: 1 })));
    }

    #[test]
    fn sandwich_matches_explicit_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_spd(5, &mut rng);
        let b = random_spd(5, &mut rng);
        let ai = inverse_spd(&a).unwrap();
        let explicit = ai.matmul(&b).matmul(&ai);
        assert!(sandwich(&a, &b).unwrap().sub(&explicit).max_abs() < 1e-8 * explicit.max_abs());
    }

    #[test]
    fn matrix_new_checks() {
        assert!(Matrix::new(2, 2, vec![1.0; 3]).is_err());
        assert_eq!(Matrix::new(1, 2, vec![1.0, f64::NAN]), Err(Error::NonFinite("matrix entries")));
    }
}
