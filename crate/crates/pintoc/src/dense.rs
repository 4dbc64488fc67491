//! Dense linear algebra for verification-scale problems and for the
//! coarsest-level solves inside multigrid.
//!
//! Two layers live here:
//! * a scalar-generic dense matrix with LU factorization (partial pivoting),
//!   used for coarse-grid solves and small oracle computations, and
//! * thin FFI wrappers over the system LAPACK (`zgeev_` for eigenvalues,
//!   `zgesvd_` for singular values) used by the spectral verification
//!   routines, where hand-rolled eigensolvers would not be trustworthy.
//!
//! Dense eigenproblems here are bounded by design (a few thousand unknowns);
//! the guards in the callers keep it that way.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::sparse::CsrMatrix;
use num_complex::Complex64;
use std::os::raw::c_char;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix<S> {
    nrows: usize,
    ncols: usize,
    data: Vec<S>,
}

impl<S: Scalar> DenseMatrix<S> {
    /// Zero matrix of the given shape.
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        DenseMatrix {
            nrows,
            ncols,
            data: vec![S::zero(); nrows * ncols],
        }
    }

    /// Identity matrix of size `n`.
    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = S::one();
        }
        m
    }

    /// Build from a function of `(row, col)`.
    pub fn from_fn(nrows: usize, ncols: usize, mut f: impl FnMut(usize, usize) -> S) -> Self {
        let mut data = Vec::with_capacity(nrows * ncols);
        for r in 0..nrows {
            for c in 0..ncols {
                data.push(f(r, c));
            }
        }
        DenseMatrix { nrows, ncols, data }
    }

    /// Densify a sparse matrix.
    pub fn from_csr(a: &CsrMatrix<S>) -> Self {
        DenseMatrix {
            nrows: a.nrows(),
            ncols: a.ncols(),
            data: a.to_dense(),
        }
    }

    /// Densify a linear operator by probing it with unit vectors.
    pub fn from_operator(dim: usize, mut apply: impl FnMut(&[S], &mut [S])) -> Self {
        let mut out = DenseMatrix::zeros(dim, dim);
        let mut e = vec![S::zero(); dim];
        let mut col = vec![S::zero(); dim];
        for c in 0..dim {
            e[c] = S::one();
            apply(&e, &mut col);
            e[c] = S::zero();
            for r in 0..dim {
                out[(r, c)] = col[r];
            }
        }
        out
    }

    /// Number of rows.
    #[inline]
    pub fn nrows(&self) -> usize {
        self.nrows
    }

    /// Number of columns.
    #[inline]
    pub fn ncols(&self) -> usize {
        self.ncols
    }

    /// Underlying row-major storage.
    #[inline]
    pub fn data(&self) -> &[S] {
        &self.data
    }

    /// Mutable row-major storage.
    #[inline]
    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    /// Matrix product `self * other`.
    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.ncols, other.nrows);
        let mut out = Self::zeros(self.nrows, other.ncols);
        for i in 0..self.nrows {
            for k in 0..self.ncols {
                let aik = self[(i, k)];
                if aik == S::zero() {
                    continue;
                }
                for j in 0..other.ncols {
                    out[(i, j)] += aik * other[(k, j)];
                }
            }
        }
        out
    }

    /// Matrix-vector product.
    pub fn mul_vec(&self, x: &[S]) -> Vec<S> {
        assert_eq!(x.len(), self.ncols);
        let mut y = vec![S::zero(); self.nrows];
        for i in 0..self.nrows {
            let row = &self.data[i * self.ncols..(i + 1) * self.ncols];
            let mut acc = S::zero();
            for (a, b) in row.iter().zip(x.iter()) {
                acc += *a * *b;
            }
            y[i] = acc;
        }
        y
    }

    /// `self - other`.
    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.nrows, other.nrows);
        assert_eq!(self.ncols, other.ncols);
        let data = self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(&a, &b)| a - b)
            .collect();
        DenseMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            data,
        }
    }

    /// `self + other`.
    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.nrows, other.nrows);
        assert_eq!(self.ncols, other.ncols);
        let data = self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(&a, &b)| a + b)
            .collect();
        DenseMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            data,
        }
    }

    /// Multiply all entries by `alpha`.
    pub fn scale(&mut self, alpha: S) {
        for v in &mut self.data {
            *v *= alpha;
        }
    }

    /// Plain transpose.
    pub fn transpose(&self) -> Self {
        Self::from_fn(self.ncols, self.nrows, |r, c| self[(c, r)])
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.ncols, self.nrows, |r, c| self[(c, r)].conj())
    }

    /// Frobenius norm.
    pub fn norm_fro(&self) -> f64 {
        self.data
            .iter()
            .map(|v| {
                let m = v.abs();
                m * m
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Largest entry modulus.
    pub fn norm_max(&self) -> f64 {
        self.data.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }

    /// Write `block` into `self` with upper-left corner at `(row, col)`.
    pub fn set_block(&mut self, row: usize, col: usize, block: &Self) {
        assert!(row + block.nrows <= self.nrows);
        assert!(col + block.ncols <= self.ncols);
        for r in 0..block.nrows {
            for c in 0..block.ncols {
                self[(row + r, col + c)] = block[(r, c)];
            }
        }
    }

    /// LU factorization with partial pivoting.
    pub fn lu(&self) -> Result<LuFactors<S>> {
        LuFactors::new(self)
    }

    /// Solve `self * x = b` through a fresh LU factorization.
    pub fn solve(&self, b: &[S]) -> Result<Vec<S>> {
        let lu = self.lu()?;
        let mut x = b.to_vec();
        lu.solve_in_place(&mut x);
        Ok(x)
    }

    /// Inverse through LU; intended for small verification matrices.
    pub fn inverse(&self) -> Result<Self> {
        let lu = self.lu()?;
        let n = self.nrows;
        let mut inv = Self::zeros(n, n);
        let mut col = vec![S::zero(); n];
        for j in 0..n {
            col.iter_mut().for_each(|v| *v = S::zero());
            col[j] = S::one();
            lu.solve_in_place(&mut col);
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        Ok(inv)
    }
}

impl DenseMatrix<f64> {
    /// Promote to complex storage.
    pub fn to_complex(&self) -> DenseMatrix<Complex64> {
        DenseMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            data: self.data.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        }
    }
}

impl<S> std::ops::Index<(usize, usize)> for DenseMatrix<S> {
    type Output = S;
    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &S {
        &self.data[r * self.ncols + c]
    }
}

impl<S> std::ops::IndexMut<(usize, usize)> for DenseMatrix<S> {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut S {
        &mut self.data[r * self.ncols + c]
    }
}

/// LU factors of a square matrix with the pivot sequence.
#[derive(Debug, Clone)]
pub struct LuFactors<S> {
    n: usize,
    lu: Vec<S>,
    piv: Vec<usize>,
}

impl<S: Scalar> LuFactors<S> {
    fn new(a: &DenseMatrix<S>) -> Result<Self> {
        if a.nrows != a.ncols {
            return Err(Error::usage("LU factorization requires a square matrix"));
        }
        let n = a.nrows;
        let mut lu = a.data.clone();
        let mut piv = vec![0usize; n];
        let scale = a.norm_max().max(f64::MIN_POSITIVE);
        for k in 0..n {
            // Partial pivoting on the largest remaining column entry.
            let mut p = k;
            let mut pmax = lu[k * n + k].abs();
            for i in (k + 1)..n {
                let m = lu[i * n + k].abs();
                if m > pmax {
                    pmax = m;
                    p = i;
                }
            }
            if pmax < 1e-14 * scale {
                return Err(Error::numerical(format!(
                    "singular pivot at column {k} (|pivot| = {pmax:.3e})"
                )));
            }
            piv[k] = p;
            if p != k {
                for j in 0..n {
                    lu.swap(k * n + j, p * n + j);
                }
            }
            let inv_pivot = S::one() / lu[k * n + k];
            for i in (k + 1)..n {
                let factor = lu[i * n + k] * inv_pivot;
                lu[i * n + k] = factor;
                if factor != S::zero() {
                    for j in (k + 1)..n {
                        let upper = lu[k * n + j];
                        lu[i * n + j] -= factor * upper;
                    }
                }
            }
        }
        Ok(LuFactors { n, lu, piv })
    }

    /// Dimension of the factored matrix.
    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solve `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [S]) {
        assert_eq!(b.len(), self.n);
        let n = self.n;
        // The factorization swaps whole rows, so the stored multipliers sit
        // in final (fully pivoted) row order; apply the complete interchange
        // sequence to the right-hand side before the triangular sweeps.
        for k in 0..n {
            b.swap(k, self.piv[k]);
        }
        for k in 0..n {
            let bk = b[k];
            if bk != S::zero() {
                for i in (k + 1)..n {
                    let l = self.lu[i * n + k];
                    if l != S::zero() {
                        b[i] -= l * bk;
                    }
                }
            }
        }
        for k in (0..n).rev() {
            let mut acc = b[k];
            for j in (k + 1)..n {
                acc -= self.lu[k * n + j] * b[j];
            }
            b[k] = acc / self.lu[k * n + k];
        }
    }

    /// Allocating solve.
    pub fn solve(&self, b: &[S]) -> Vec<S> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

// System LAPACK entry points used by the verification layer. The library
// ships with the distribution's OpenBLAS, which bundles LAPACK.
#[link(name = "openblas")]
extern "C" {
    fn zgeev_(
        jobvl: *const c_char,
        jobvr: *const c_char,
        n: *const i32,
        a: *mut Complex64,
        lda: *const i32,
        w: *mut Complex64,
        vl: *mut Complex64,
        ldvl: *const i32,
        vr: *mut Complex64,
        ldvr: *const i32,
        work: *mut Complex64,
        lwork: *const i32,
        rwork: *mut f64,
        info: *mut i32,
    );

    fn zgesvd_(
        jobu: *const c_char,
        jobvt: *const c_char,
        m: *const i32,
        n: *const i32,
        a: *mut Complex64,
        lda: *const i32,
        s: *mut f64,
        u: *mut Complex64,
        ldu: *const i32,
        vt: *mut Complex64,
        ldvt: *const i32,
        work: *mut Complex64,
        lwork: *const i32,
        rwork: *mut f64,
        info: *mut i32,
    );
}

fn check_dim_i32(n: usize) -> Result<i32> {
    i32::try_from(n).map_err(|_| Error::usage("matrix too large for LAPACK interface"))
}

/// Eigenvalues of a general complex matrix, sorted by descending real part
/// (ties broken by descending imaginary part).
pub fn eigenvalues(a: &DenseMatrix<Complex64>) -> Result<Vec<Complex64>> {
    if a.nrows() != a.ncols() {
        return Err(Error::usage("eigenvalues require a square matrix"));
    }
    let n = a.nrows();
    if n == 0 {
        return Ok(Vec::new());
    }
    let ni = check_dim_i32(n)?;
    // Row-major data passed as column-major is the transpose, which shares
    // the same eigenvalues; no conversion needed for values alone.
    let mut work_a = a.data().to_vec();
    let mut w = vec![Complex64::new(0.0, 0.0); n];
    let mut rwork = vec![0.0f64; 2 * n];
    let jobv = b'N' as c_char;
    let one = 1i32;
    let mut info = 0i32;
    // Workspace query.
    let mut query = [Complex64::new(0.0, 0.0)];
    let neg_one = -1i32;
    unsafe {
        zgeev_(
            &jobv,
            &jobv,
            &ni,
            work_a.as_mut_ptr(),
            &ni,
            w.as_mut_ptr(),
            std::ptr::null_mut(),
            &one,
            std::ptr::null_mut(),
            &one,
            query.as_mut_ptr(),
            &neg_one,
            rwork.as_mut_ptr(),
            &mut info,
        );
    }
    if info != 0 {
        return Err(Error::numerical(format!(
            "eigensolver workspace query failed (info = {info})"
        )));
    }
    let lwork = (query[0].re as usize).max(2 * n);
    let lwork_i = check_dim_i32(lwork)?;
    let mut work = vec![Complex64::new(0.0, 0.0); lwork];
    unsafe {
        zgeev_(
            &jobv,
            &jobv,
            &ni,
            work_a.as_mut_ptr(),
            &ni,
            w.as_mut_ptr(),
            std::ptr::null_mut(),
            &one,
            std::ptr::null_mut(),
            &one,
            work.as_mut_ptr(),
            &lwork_i,
            rwork.as_mut_ptr(),
            &mut info,
        );
    }
    if info != 0 {
        return Err(Error::numerical(format!(
            "eigensolver did not converge (info = {info})"
        )));
    }
    sort_eigenvalues(&mut w);
    Ok(w)
}

/// Eigenvalues and right eigenvectors of a general complex matrix.
///
/// Returns `(values, vectors)` with `vectors` holding one unit-norm right
/// eigenvector per column, aligned with `values` (same ordering as
/// [`eigenvalues`]).
pub fn eigenpairs(a: &DenseMatrix<Complex64>) -> Result<(Vec<Complex64>, DenseMatrix<Complex64>)> {
    if a.nrows() != a.ncols() {
        return Err(Error::usage("eigenpairs require a square matrix"));
    }
    let n = a.nrows();
    let ni = check_dim_i32(n)?;
    // Eigenvectors require the true matrix, so convert to column-major.
    let mut work_a = vec![Complex64::new(0.0, 0.0); n * n];
    for r in 0..n {
        for c in 0..n {
            work_a[c * n + r] = a[(r, c)];
        }
    }
    let mut w = vec![Complex64::new(0.0, 0.0); n];
    let mut vr = vec![Complex64::new(0.0, 0.0); n * n];
    let mut rwork = vec![0.0f64; 2 * n];
    let jobvl = b'N' as c_char;
    let jobvr = b'V' as c_char;
    let one = 1i32;
    let mut info = 0i32;
    let mut query = [Complex64::new(0.0, 0.0)];
    let neg_one = -1i32;
    unsafe {
        zgeev_(
            &jobvl,
            &jobvr,
            &ni,
            work_a.as_mut_ptr(),
            &ni,
            w.as_mut_ptr(),
            std::ptr::null_mut(),
            &one,
            vr.as_mut_ptr(),
            &ni,
            query.as_mut_ptr(),
            &neg_one,
            rwork.as_mut_ptr(),
            &mut info,
        );
    }
    if info != 0 {
        return Err(Error::numerical(format!(
            "eigensolver workspace query failed (info = {info})"
        )));
    }
    let lwork = (query[0].re as usize).max(2 * n);
    let lwork_i = check_dim_i32(lwork)?;
    let mut work = vec![Complex64::new(0.0, 0.0); lwork];
    unsafe {
        zgeev_(
            &jobvl,
            &jobvr,
            &ni,
            work_a.as_mut_ptr(),
            &ni,
            w.as_mut_ptr(),
            std::ptr::null_mut(),
            &one,
            vr.as_mut_ptr(),
            &ni,
            work.as_mut_ptr(),
            &lwork_i,
            rwork.as_mut_ptr(),
            &mut info,
        );
    }
    if info != 0 {
        return Err(Error::numerical(format!(
            "eigensolver did not converge (info = {info})"
        )));
    }
    // Column-major vr, column j = eigenvector for w[j]; reorder together
    // with the sorted values.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        (w[j].re, w[j].im)
            .partial_cmp(&(w[i].re, w[i].im))
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values: Vec<Complex64> = order.iter().map(|&j| w[j]).collect();
    let vectors = DenseMatrix::from_fn(n, n, |r, c| vr[order[c] * n + r]);
    Ok((values, vectors))
}

/// Singular values of a general complex matrix, descending.
pub fn singular_values(a: &DenseMatrix<Complex64>) -> Result<Vec<f64>> {
    let (m, n) = (a.nrows(), a.ncols());
    if m == 0 || n == 0 {
        return Ok(Vec::new());
    }
    // Row-major passed as column-major is the transpose, which has the
    // same singular values.
    let mi = check_dim_i32(n)?;
    let ni_t = check_dim_i32(m)?;
    let mut work_a = a.data().to_vec();
    let k = m.min(n);
    let mut s = vec![0.0f64; k];
    let mut rwork = vec![0.0f64; 5 * k];
    let jobn = b'N' as c_char;
    let one = 1i32;
    let mut info = 0i32;
    let mut query = [Complex64::new(0.0, 0.0)];
    let neg_one = -1i32;
    unsafe {
        zgesvd_(
            &jobn,
            &jobn,
            &mi,
            &ni_t,
            work_a.as_mut_ptr(),
            &mi,
            s.as_mut_ptr(),
            std::ptr::null_mut(),
            &one,
            std::ptr::null_mut(),
            &one,
            query.as_mut_ptr(),
            &neg_one,
            rwork.as_mut_ptr(),
            &mut info,
        );
    }
    if info != 0 {
        return Err(Error::numerical(format!(
            "SVD workspace query failed (info = {info})"
        )));
    }
    let lwork = (query[0].re as usize).max(3 * k);
    let lwork_i = check_dim_i32(lwork)?;
    let mut work = vec![Complex64::new(0.0, 0.0); lwork];
    unsafe {
        zgesvd_(
            &jobn,
            &jobn,
            &mi,
            &ni_t,
            work_a.as_mut_ptr(),
            &mi,
            s.as_mut_ptr(),
            std::ptr::null_mut(),
            &one,
            std::ptr::null_mut(),
            &one,
            work.as_mut_ptr(),
            &lwork_i,
            rwork.as_mut_ptr(),
            &mut info,
        );
    }
    if info != 0 {
        return Err(Error::numerical(format!(
            "SVD did not converge (info = {info})"
        )));
    }
    Ok(s)
}

/// Eigenvalues of a real matrix (promoted internally).
pub fn eigenvalues_real(a: &DenseMatrix<f64>) -> Result<Vec<Complex64>> {
    eigenvalues(&a.to_complex())
}

fn sort_eigenvalues(w: &mut [Complex64]) {
    w.sort_by(|a, b| {
        (b.re, b.im)
            .partial_cmp(&(a.re, a.im))
            .unwrap_or(std::cmp::Ordering::Equal)
    });
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lu_solves_small_real_system() {
        let a = DenseMatrix::from_fn(3, 3, |r, c| match (r, c) {
            (0, 0) => 4.0,
            (0, 1) => 1.0,
            (1, 0) => 1.0,
            (1, 1) => 3.0,
            (1, 2) => 1.0,
            (2, 1) => 1.0,
            (2, 2) => 2.0,
            _ => 0.0,
        });
        let x_true = vec![1.0, -2.0, 3.0];
        let b = a.mul_vec(&x_true);
        let x = a.solve(&b).unwrap();
        for (xi, ti) in x.iter().zip(x_true.iter()) {
            assert!((xi - ti).abs() < 1e-12);
        }
    }

    #[test]
    fn lu_rejects_singular_matrix() {
        let a = DenseMatrix::from_fn(2, 2, |r, _| if r == 0 { 1.0 } else { 2.0 });
        assert!(a.lu().is_err());
    }

    #[test]
    fn lu_recovers_known_solution_of_dense_complex_system() {
        // Pseudo-random but deterministic entries with both parts active, so
        // partial pivoting performs genuine row exchanges.
        let n = 30;
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        };
        let a = DenseMatrix::from_fn(n, n, |_, _| Complex64::new(next(), next()));
        let x_true: Vec<Complex64> = (0..n).map(|_| Complex64::new(next(), next())).collect();
        // Ground-truth right-hand side by an explicit loop independent of
        // mul_vec.
        let mut b = vec![Complex64::new(0.0, 0.0); n];
        for i in 0..n {
            let mut acc = Complex64::new(0.0, 0.0);
            for j in 0..n {
                acc += a[(i, j)] * x_true[j];
            }
            b[i] = acc;
        }
        let bv = a.mul_vec(&x_true);
        for i in 0..n {
            assert!((bv[i] - b[i]).norm() < 1e-12, "mul_vec mismatch at {i}");
        }
        let x = a.lu().unwrap().solve(&b);
        let err: f64 = x
            .iter()
            .zip(&x_true)
            .map(|(u, v)| (u - v).norm_sqr())
            .sum::<f64>()
            .sqrt();
        assert!(err < 1e-10, "LU solution error {err:.3e}");
    }

    #[test]
    fn lu_solves_complex_system() {
        let a = DenseMatrix::from_fn(2, 2, |r, c| match (r, c) {
            (0, 0) => Complex64::new(1.0, 1.0),
            (0, 1) => Complex64::new(0.0, -1.0),
            (1, 0) => Complex64::new(2.0, 0.0),
            (1, 1) => Complex64::new(3.0, 1.0),
            _ => unreachable!(),
        });
        let x_true = vec![Complex64::new(1.0, -1.0), Complex64::new(0.5, 2.0)];
        let b = a.mul_vec(&x_true);
        let x = a.solve(&b).unwrap();
        for (xi, ti) in x.iter().zip(x_true.iter()) {
            assert!((xi - ti).norm() < 1e-12);
        }
    }

    #[test]
    fn inverse_times_matrix_is_identity() {
        let a = DenseMatrix::from_fn(4, 4, |r, c| {
            if r == c {
                2.0
            } else if r.abs_diff(c) == 1 {
                -1.0
            } else {
                0.0
            }
        });
        let inv = a.inverse().unwrap();
        let prod = a.matmul(&inv);
        let err = prod.sub(&DenseMatrix::identity(4)).norm_max();
        assert!(err < 1e-12);
    }

    #[test]
    fn eigenvalues_of_diagonal_matrix() {
        let a = DenseMatrix::from_fn(3, 3, |r, c| {
            if r == c {
                Complex64::new((r + 1) as f64, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        let w = eigenvalues(&a).unwrap();
        assert!((w[0] - Complex64::new(3.0, 0.0)).norm() < 1e-12);
        assert!((w[1] - Complex64::new(2.0, 0.0)).norm() < 1e-12);
        assert!((w[2] - Complex64::new(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn eigenvalues_of_rotation_like_matrix_are_complex() {
        // [[0, -1], [1, 0]] has eigenvalues +/- i.
        let a = DenseMatrix::from_fn(2, 2, |r, c| match (r, c) {
            (0, 1) => Complex64::new(-1.0, 0.0),
            (1, 0) => Complex64::new(1.0, 0.0),
            _ => Complex64::new(0.0, 0.0),
        });
        let w = eigenvalues(&a).unwrap();
        // Tiny real-part roundoff makes the sort order of the pair
        // unpredictable, so compare as a set.
        let hit_plus = w.iter().any(|z| (z - Complex64::new(0.0, 1.0)).norm() < 1e-12);
        let hit_minus = w.iter().any(|z| (z - Complex64::new(0.0, -1.0)).norm() < 1e-12);
        assert!(hit_plus && hit_minus);
    }

    #[test]
    fn eigenpairs_have_small_backward_error() {
        let n = 12;
        let a = DenseMatrix::from_fn(n, n, |r, c| {
            Complex64::new(
                ((r * 7 + c * 3) % 11) as f64 / 11.0,
                ((r * 5 + c * 2) % 7) as f64 / 7.0 - 0.5,
            )
        });
        let (vals, vecs) = eigenpairs(&a).unwrap();
        let norm_a = a.norm_fro();
        for j in 0..n {
            let v: Vec<Complex64> = (0..n).map(|i| vecs[(i, j)]).collect();
            let av = a.mul_vec(&v);
            let mut err = 0.0f64;
            for i in 0..n {
                err += (av[i] - vals[j] * v[i]).norm_sqr();
            }
            assert!(err.sqrt() <= 1e-8 * norm_a.max(1.0));
        }
    }

    #[test]
    fn singular_values_of_diagonal_matrix() {
        let a = DenseMatrix::from_fn(2, 3, |r, c| {
            if r == c {
                Complex64::new(-((r + 2) as f64), 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        let s = singular_values(&a).unwrap();
        assert_eq!(s.len(), 2);
        assert!((s[0] - 3.0).abs() < 1e-12);
        assert!((s[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn lu_matches_lapack_scale_on_hilbert_like_matrix() {
        let n = 8;
        let a = DenseMatrix::from_fn(n, n, |r, c| 1.0 / ((r + c + 1) as f64) + if r == c { 1.0 } else { 0.0 });
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let x = a.solve(&b).unwrap();
        let back = a.mul_vec(&x);
        for (bi, yi) in b.iter().zip(back.iter()) {
            assert!((bi - yi).abs() < 1e-10);
        }
    }
}
