//! Compressed-sparse-row matrices with the small set of operations the
//! solvers need: matrix-vector products, conjugate transposition, linear
//! combinations, diagonal extraction, and MatrixMarket import/export.
//!
//! Construction goes through [`CooBuilder`], which accumulates triplets in
//! any order, then sums duplicates and drops exact zeros on finalization.
//! Finalized matrices store strictly increasing column indices per row and
//! contain no explicit zeros.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use num_complex::Complex64;
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

/// Triplet accumulator for assembling a [`CsrMatrix`].
#[derive(Debug, Clone)]
pub struct CooBuilder<S> {
    nrows: usize,
    ncols: usize,
    entries: Vec<(usize, usize, S)>,
}

impl<S: Scalar> CooBuilder<S> {
    /// New builder for an `nrows x ncols` matrix.
    pub fn new(nrows: usize, ncols: usize) -> Self {
        CooBuilder {
            nrows,
            ncols,
            entries: Vec::new(),
        }
    }

    /// Accumulate `value` at `(row, col)`; duplicates are summed on finalize.
    #[inline]
    pub fn push(&mut self, row: usize, col: usize, value: S) {
        debug_assert!(row < self.nrows && col < self.ncols);
        self.entries.push((row, col, value));
    }

    /// Sort, combine duplicates, drop exact zeros, and build the CSR form.
    pub fn finalize(mut self) -> CsrMatrix<S> {
        self.entries
            .sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; self.nrows + 1];
        let mut col_idx = Vec::with_capacity(self.entries.len());
        let mut vals: Vec<S> = Vec::with_capacity(self.entries.len());
        let mut iter = self.entries.into_iter().peekable();
        while let Some((r, c, mut v)) = iter.next() {
            while let Some(&(r2, c2, v2)) = iter.peek() {
                if r2 == r && c2 == c {
                    v += v2;
                    iter.next();
                } else {
                    break;
                }
            }
            if v != S::zero() {
                col_idx.push(c);
                vals.push(v);
                row_ptr[r + 1] += 1;
            }
        }
        for i in 0..self.nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        CsrMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            row_ptr,
            col_idx,
            vals,
        }
    }
}

/// Sparse matrix in compressed-sparse-row format.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix<S> {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    vals: Vec<S>,
}

impl<S: Scalar> CsrMatrix<S> {
    /// Zero matrix with the given shape.
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        CsrMatrix {
            nrows,
            ncols,
            row_ptr: vec![0; nrows + 1],
            col_idx: Vec::new(),
            vals: Vec::new(),
        }
    }

    /// Identity matrix of size `n`.
    pub fn identity(n: usize) -> Self {
        CsrMatrix {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            vals: vec![S::one(); n],
        }
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

    /// Number of stored entries.
    #[inline]
    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Row pointer array (length `nrows + 1`).
    #[inline]
    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    /// Column indices, strictly increasing within each row.
    #[inline]
    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    /// Stored values, aligned with [`CsrMatrix::col_idx`].
    #[inline]
    pub fn values(&self) -> &[S] {
        &self.vals
    }

    /// Entry accessor by binary search; zero when not stored.
    pub fn get(&self, row: usize, col: usize) -> S {
        let lo = self.row_ptr[row];
        let hi = self.row_ptr[row + 1];
        match self.col_idx[lo..hi].binary_search(&col) {
            Ok(k) => self.vals[lo + k],
            Err(_) => S::zero(),
        }
    }

    /// `y = A x`.
    pub fn mul_vec(&self, x: &[S], y: &mut [S]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(y.len(), self.nrows);
        for i in 0..self.nrows {
            let mut acc = S::zero();
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[k] * x[self.col_idx[k]];
            }
            y[i] = acc;
        }
    }

    /// `y += alpha * A x`.
    pub fn mul_vec_add(&self, alpha: S, x: &[S], y: &mut [S]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(y.len(), self.nrows);
        for i in 0..self.nrows {
            let mut acc = S::zero();
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[k] * x[self.col_idx[k]];
            }
            y[i] += alpha * acc;
        }
    }

    /// Allocating variant of [`CsrMatrix::mul_vec`].
    pub fn apply(&self, x: &[S]) -> Vec<S> {
        let mut y = vec![S::zero(); self.nrows];
        self.mul_vec(x, &mut y);
        y
    }

    /// Plain transpose.
    pub fn transpose(&self) -> Self {
        self.transpose_impl(false)
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        self.transpose_impl(true)
    }

    fn transpose_impl(&self, conjugate: bool) -> Self {
        let mut row_ptr = vec![0usize; self.ncols + 1];
        for &c in &self.col_idx {
            row_ptr[c + 1] += 1;
        }
        for i in 0..self.ncols {
            row_ptr[i + 1] += row_ptr[i];
        }
        let mut col_idx = vec![0usize; self.nnz()];
        let mut vals = vec![S::zero(); self.nnz()];
        let mut cursor = row_ptr.clone();
        for r in 0..self.nrows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.col_idx[k];
                let dst = cursor[c];
                col_idx[dst] = r;
                vals[dst] = if conjugate {
                    self.vals[k].conj()
                } else {
                    self.vals[k]
                };
                cursor[c] += 1;
            }
        }
        CsrMatrix {
            nrows: self.ncols,
            ncols: self.nrows,
            row_ptr,
            col_idx,
            vals,
        }
    }

    /// `alpha * self + beta * other`, both summands sharing this shape.
    pub fn add_scaled(&self, alpha: S, other: &Self, beta: S) -> Self {
        assert_eq!(self.nrows, other.nrows);
        assert_eq!(self.ncols, other.ncols);
        let mut builder = CooBuilder::new(self.nrows, self.ncols);
        for r in 0..self.nrows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                builder.push(r, self.col_idx[k], alpha * self.vals[k]);
            }
            for k in other.row_ptr[r]..other.row_ptr[r + 1] {
                builder.push(r, other.col_idx[k], beta * other.vals[k]);
            }
        }
        builder.finalize()
    }

    /// Weighted sum of several same-shape matrices.
    pub fn linear_combination(terms: &[(S, &CsrMatrix<S>)]) -> Self {
        assert!(!terms.is_empty());
        let (nrows, ncols) = (terms[0].1.nrows, terms[0].1.ncols);
        let mut builder = CooBuilder::new(nrows, ncols);
        for &(alpha, mat) in terms {
            assert_eq!(mat.nrows, nrows);
            assert_eq!(mat.ncols, ncols);
            for r in 0..nrows {
                for k in mat.row_ptr[r]..mat.row_ptr[r + 1] {
                    builder.push(r, mat.col_idx[k], alpha * mat.vals[k]);
                }
            }
        }
        builder.finalize()
    }

    /// Multiply every entry by `alpha` in place.
    pub fn scale(&mut self, alpha: S) {
        for v in &mut self.vals {
            *v *= alpha;
        }
    }

    /// Main diagonal as a dense vector.
    pub fn diagonal(&self) -> Vec<S> {
        let n = self.nrows.min(self.ncols);
        (0..n).map(|i| self.get(i, i)).collect()
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.nrows)
            .map(|r| {
                self.vals[self.row_ptr[r]..self.row_ptr[r + 1]]
                    .iter()
                    .map(|v| v.abs())
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    }

    /// Submatrix selecting `rows` then `cols`, in the order given.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Self {
        let mut col_map = vec![usize::MAX; self.ncols];
        for (new, &old) in cols.iter().enumerate() {
            col_map[old] = new;
        }
        let mut builder = CooBuilder::new(rows.len(), cols.len());
        for (new_r, &old_r) in rows.iter().enumerate() {
            for k in self.row_ptr[old_r]..self.row_ptr[old_r + 1] {
                let mapped = col_map[self.col_idx[k]];
                if mapped != usize::MAX {
                    builder.push(new_r, mapped, self.vals[k]);
                }
            }
        }
        builder.finalize()
    }

    /// Dense row-major copy, mostly for small verification problems.
    pub fn to_dense(&self) -> Vec<S> {
        let mut out = vec![S::zero(); self.nrows * self.ncols];
        for r in 0..self.nrows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                out[r * self.ncols + self.col_idx[k]] = self.vals[k];
            }
        }
        out
    }
}

impl CsrMatrix<f64> {
    /// `y = A x` for a complex vector without promoting the matrix.
    pub fn mul_complex(&self, x: &[Complex64], y: &mut [Complex64]) {
        assert_eq!(x.len(), self.ncols, "input length mismatch");
        assert_eq!(y.len(), self.nrows, "output length mismatch");
        for r in 0..self.nrows {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += x[self.col_idx[k]] * self.vals[k];
            }
            y[r] = acc;
        }
    }

    /// `y += alpha * A x` for a complex vector and real scalar weight.
    pub fn mul_complex_add(&self, alpha: f64, x: &[Complex64], y: &mut [Complex64]) {
        assert_eq!(x.len(), self.ncols, "input length mismatch");
        assert_eq!(y.len(), self.nrows, "output length mismatch");
        for r in 0..self.nrows {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += x[self.col_idx[k]] * self.vals[k];
            }
            y[r] += acc * alpha;
        }
    }

    /// Promote a real matrix to complex storage.
    pub fn to_complex(&self) -> CsrMatrix<Complex64> {
        CsrMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            row_ptr: self.row_ptr.clone(),
            col_idx: self.col_idx.clone(),
            vals: self.vals.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        }
    }

    /// Write in MatrixMarket coordinate format (1-based indices).
    pub fn write_matrix_market(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = BufWriter::new(file);
        writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(w, "{} {} {}", self.nrows, self.ncols, self.nnz())?;
        for r in 0..self.nrows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                writeln!(w, "{} {} {:.17e}", r + 1, self.col_idx[k] + 1, self.vals[k])?;
            }
        }
        Ok(())
    }

    /// Read a real general MatrixMarket coordinate file.
    pub fn read_matrix_market(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let reader = std::io::BufReader::new(file);
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty matrix file".into()))??;
        let h = header.to_ascii_lowercase();
        if !h.starts_with("%%matrixmarket matrix coordinate real") {
            return Err(Error::Parse(format!(
                "unsupported MatrixMarket header: {header}"
            )));
        }
        let mut size_line = None;
        for line in lines.by_ref() {
            let line = line?;
            if line.starts_with('%') || line.trim().is_empty() {
                continue;
            }
            size_line = Some(line);
            break;
        }
        let size_line = size_line.ok_or_else(|| Error::Parse("missing size line".into()))?;
        let dims: Vec<usize> = size_line
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse(format!("bad size line: {e}")))?;
        if dims.len() != 3 {
            return Err(Error::Parse("size line must have three fields".into()));
        }
        let (nrows, ncols, nnz) = (dims[0], dims[1], dims[2]);
        let mut builder = CooBuilder::new(nrows, ncols);
        let mut seen = 0usize;
        for line in lines {
            let line = line?;
            if line.starts_with('%') || line.trim().is_empty() {
                continue;
            }
            let mut it = line.split_whitespace();
            let r: usize = it
                .next()
                .ok_or_else(|| Error::Parse("missing row index".into()))?
                .parse()
                .map_err(|e| Error::Parse(format!("bad row index: {e}")))?;
            let c: usize = it
                .next()
                .ok_or_else(|| Error::Parse("missing column index".into()))?
                .parse()
                .map_err(|e| Error::Parse(format!("bad column index: {e}")))?;
            let v: f64 = it
                .next()
                .ok_or_else(|| Error::Parse("missing value".into()))?
                .parse()
                .map_err(|e| Error::Parse(format!("bad value: {e}")))?;
            if r == 0 || c == 0 || r > nrows || c > ncols {
                return Err(Error::Parse(format!("entry ({r},{c}) out of bounds")));
            }
            builder.push(r - 1, c - 1, v);
            seen += 1;
        }
        if seen != nnz {
            return Err(Error::Parse(format!(
                "expected {nnz} entries, found {seen}"
            )));
        }
        Ok(builder.finalize())
    }
}

impl CsrMatrix<Complex64> {
    /// Write in MatrixMarket coordinate complex format (1-based indices).
    pub fn write_matrix_market(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = BufWriter::new(file);
        writeln!(w, "%%MatrixMarket matrix coordinate complex general")?;
        writeln!(w, "{} {} {}", self.nrows, self.ncols, self.nnz())?;
        for r in 0..self.nrows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                writeln!(
                    w,
                    "{} {} {:.17e} {:.17e}",
                    r + 1,
                    self.col_idx[k] + 1,
                    self.vals[k].re,
                    self.vals[k].im
                )?;
            }
        }
        Ok(())
    }
}
