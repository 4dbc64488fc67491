//! Frequency-block preconditioning for the self-adjoint (diffusion-only)
//! control system.
//!
//! Replacing the lower-bidiagonal time coupling by its circulant completion
//! makes the space-time operator block-diagonalizable by the unitary
//! discrete Fourier transform in time. Each frequency `j` contributes one
//! coupled block over `(v, l, p, m)` unknowns which factors as
//! `G_j = T_l Z_j T_r` with triangular complex scalings `T_l`, `T_r = T_l^H`
//! and a *real symmetric* core `Z_j`. The core is handled either by one
//! application of a block-diagonal SPD projector (linear variant, a fixed
//! linear map suitable for outer GMRES) or by an inner Krylov solve to a
//! loose tolerance (nonlinear variant, for outer flexible GMRES).
//!
//! All per-frequency work is embarrassingly parallel; mirrored frequencies
//! carry conjugate data and bitwise-equal derived constants, so the
//! assembled result of a real input is real to roundoff and independent of
//! the worker count.

use std::sync::Arc;

use num_complex::Complex64;

use crate::chebyshev::{pressure_mass_bounds, ChebyshevSolve};
use crate::circulant::{
    from_block_diagonal_order, to_block_diagonal_order, BlockLayout, BlockVector, TimeFourier,
    TimeGrid,
};
use crate::dense::{DenseMatrix, LuFactors};
use crate::error::{Error, Result};
use crate::fem::Assembly;
use crate::krylov::{gmres, KrylovConfig};
use crate::multigrid::{EllipticSolve, MgParams};
use crate::parallel;
use crate::scalar::promote;
use crate::sparse::CsrMatrix;

/// Derived per-frequency constants of the triangular factorization.
///
/// For frequency value `d = d_r + i d_c`, step `tau` and regularization
/// `beta`:
///
/// ```text
/// c1 = d_r / sqrt(tau^2 / beta + d_c^2)
/// c2 = 1 / sqrt(1 / beta + (d_c / tau)^2)
/// ```
///
/// `c2` is always positive; `c1` carries the sign of `d_r` and satisfies
/// `c1 = d_r c2 / tau`. Both are invariant under conjugation of `d`, which
/// is what lets mirrored frequencies share their solver plans.
pub fn block_constants(d: Complex64, tau: f64, beta: f64) -> (f64, f64) {
    let c1 = d.re / (tau * tau / beta + d.im * d.im).sqrt();
    let c2 = 1.0 / (1.0 / beta + (d.im / tau) * (d.im / tau)).sqrt();
    (c1, c2)
}

/// Settings for building a frequency-block preconditioner.
#[derive(Debug, Clone, Copy)]
pub struct PrecondParams {
    /// Multigrid cycle shape used by every elliptic sub-solve.
    pub mg: MgParams,
    /// Chebyshev step count for pressure-mass solves.
    pub cheb_iters: usize,
    /// Relative tolerance of the inner per-block Krylov solve.
    pub inner_tol: f64,
    /// Iteration cap of the inner per-block Krylov solve.
    pub inner_cap: usize,
    /// Worker threads for the per-frequency loops (0 = automatic).
    pub workers: usize,
    /// Verification switch: replace every approximate inner solve (V-cycles,
    /// Chebyshev) by a dense factorization. Only valid on small problems.
    pub exact_inner: bool,
}

impl Default for PrecondParams {
    fn default() -> Self {
        PrecondParams {
            mg: MgParams::default(),
            cheb_iters: 10,
            inner_tol: 1e-2,
            inner_cap: 200,
            workers: 0,
            exact_inner: false,
        }
    }
}

/// Pressure-mass inverse approximation (or exact factorization when the
/// verification switch is on).
pub(crate) enum MassApply {
    Chebyshev(ChebyshevSolve<f64>),
    Direct(LuFactors<f64>),
}

impl MassApply {
    pub(crate) fn solve(&self, b: &[f64]) -> Vec<f64> {
        match self {
            MassApply::Chebyshev(c) => c.solve(b),
            MassApply::Direct(lu) => lu.solve(b),
        }
    }
}

/// Iteration statistics of one application of the nonlinear variant.
#[derive(Debug, Clone, Default)]
pub struct InnerSolveStats {
    /// Inner Krylov iterations spent in each frequency block.
    pub iterations: Vec<usize>,
    /// Frequency blocks whose inner solve missed its tolerance at the cap.
    pub flagged: Vec<usize>,
}

impl InnerSolveStats {
    /// Total inner iterations across all blocks.
    pub fn total(&self) -> usize {
        self.iterations.iter().sum()
    }

    /// Largest per-block inner count.
    pub fn max(&self) -> usize {
        self.iterations.iter().copied().max().unwrap_or(0)
    }
}

/// `a * i * z`, computed componentwise so that mirrored inputs
/// (`a -> -a`, `z -> conj z`) produce the exactly conjugated result.
#[inline]
fn i_scale(a: f64, z: Complex64) -> Complex64 {
    Complex64::new(-a * z.im, a * z.re)
}

pub(crate) fn sections(x: &[Complex64], ns: usize, np: usize) -> (&[Complex64], &[Complex64], &[Complex64], &[Complex64]) {
    let nv = 2 * ns;
    let (v, rest) = x.split_at(nv);
    let (l, rest) = rest.split_at(nv);
    let (p, m) = rest.split_at(np);
    (v, l, p, m)
}

pub(crate) fn sections_mut(
    x: &mut [Complex64],
    ns: usize,
    np: usize,
) -> (
    &mut [Complex64],
    &mut [Complex64],
    &mut [Complex64],
    &mut [Complex64],
) {
    let nv = 2 * ns;
    let (v, rest) = x.split_at_mut(nv);
    let (l, rest) = rest.split_at_mut(nv);
    let (p, m) = rest.split_at_mut(np);
    (v, l, p, m)
}

/// Apply a real solve to the real and imaginary parts of a complex vector.
pub(crate) fn split_solve(solve: impl Fn(&[f64]) -> Vec<f64>, x: &[Complex64], out: &mut [Complex64]) {
    let re: Vec<f64> = x.iter().map(|z| z.re).collect();
    let im: Vec<f64> = x.iter().map(|z| z.im).collect();
    let sr = solve(&re);
    let si = solve(&im);
    for k in 0..x.len() {
        out[k] = Complex64::new(sr[k], si[k]);
    }
}

/// Accumulate `w * m` into `a` at block offset `(r0, c0)`.
pub(crate) fn add_csr_block(a: &mut DenseMatrix<Complex64>, m: &CsrMatrix<f64>, r0: usize, c0: usize, w: Complex64) {
    let rp = m.row_ptr();
    let ci = m.col_idx();
    let vals = m.values();
    for r in 0..m.nrows() {
        for k in rp[r]..rp[r + 1] {
            a[(r0 + r, c0 + ci[k])] += w * vals[k];
        }
    }
}

/// Everything one frequency block needs, immutable after construction so the
/// per-block loops can run on any worker without synchronization.
pub struct StokesBlockContext {
    /// Frequency index.
    pub index: usize,
    /// Frequency value of the circulant time coupling.
    pub d: Complex64,
    /// Time step.
    pub tau: f64,
    /// Control regularization weight.
    pub beta: f64,
    /// Viscosity.
    pub nu: f64,
    /// First derived constant (see [`block_constants`]).
    pub c1: f64,
    /// Second derived constant, always positive.
    pub c2: f64,
    ns: usize,
    np: usize,
    mass_s: Arc<CsrMatrix<f64>>,
    /// `c1 M + c2 nu K` per scalar velocity component.
    aw_s: Arc<CsrMatrix<f64>>,
    /// `(1 + c1) M + c2 nu K` per scalar velocity component (SPD).
    w_s: Arc<CsrMatrix<f64>>,
    bx: Arc<CsrMatrix<f64>>,
    by: Arc<CsrMatrix<f64>>,
    bx_t: Arc<CsrMatrix<f64>>,
    by_t: Arc<CsrMatrix<f64>>,
    w_solve: Arc<EllipticSolve<f64>>,
    kp_solve: Arc<EllipticSolve<f64>>,
    mp_solve: Arc<MassApply>,
}

impl StokesBlockContext {
    /// Size of this block's coupled unknown vector.
    pub fn block_dim(&self) -> usize {
        4 * self.ns + 2 * self.np
    }

    /// Scalar-component and pressure dimensions.
    pub fn dims(&self) -> (usize, usize) {
        (self.ns, self.np)
    }

    /// The scalar SPD velocity matrix `(1 + c1) M + c2 nu K`.
    pub fn scalar_w(&self) -> &CsrMatrix<f64> {
        &self.w_s
    }

    /// Left triangular factor applied forward: `out = T_l x`.
    pub fn apply_tl(&self, x: &[Complex64], out: &mut [Complex64]) {
        let st = self.tau.sqrt();
        let dc = self.d.im;
        let (xv, xl, xp, xm) = sections(x, self.ns, self.np);
        let (ov, ol, op_, om) = sections_mut(out, self.ns, self.np);
        for k in 0..xv.len() {
            ov[k] = xv[k] * st;
            ol[k] = i_scale(dc / st, xv[k]) + xl[k] * (st / self.c2);
        }
        for k in 0..xp.len() {
            op_[k] = xp[k] * (st * self.c2);
            om[k] = i_scale(dc * self.c2 / st, xp[k]) + xm[k] * st;
        }
    }

    /// Right triangular factor applied forward: `out = T_r x` with
    /// `T_r = T_l^H`.
    pub fn apply_tr(&self, x: &[Complex64], out: &mut [Complex64]) {
        let st = self.tau.sqrt();
        let dc = self.d.im;
        let (xv, xl, xp, xm) = sections(x, self.ns, self.np);
        let (ov, ol, op_, om) = sections_mut(out, self.ns, self.np);
        for k in 0..xv.len() {
            ov[k] = xv[k] * st - i_scale(dc / st, xl[k]);
            ol[k] = xl[k] * (st / self.c2);
        }
        for k in 0..xp.len() {
            op_[k] = xp[k] * (st * self.c2) - i_scale(dc * self.c2 / st, xm[k]);
            om[k] = xm[k] * st;
        }
    }

    /// In-place forward substitution with the left factor: `r <- T_l^{-1} r`.
    pub fn apply_tl_inv(&self, r: &mut [Complex64]) {
        let st = self.tau.sqrt();
        let dc = self.d.im;
        let (rv, rl, rp, rm) = sections_mut(r, self.ns, self.np);
        let inv_st = 1.0 / st;
        for k in 0..rv.len() {
            rv[k] *= inv_st;
            rl[k] = (rl[k] - i_scale(dc / st, rv[k])) * (self.c2 / st);
        }
        let inv_pc = 1.0 / (st * self.c2);
        for k in 0..rp.len() {
            rp[k] *= inv_pc;
            rm[k] = (rm[k] - i_scale(dc * self.c2 / st, rp[k])) * inv_st;
        }
    }

    /// In-place back substitution with the right factor: `r <- T_r^{-1} r`.
    pub fn apply_tr_inv(&self, r: &mut [Complex64]) {
        let st = self.tau.sqrt();
        let dc = self.d.im;
        let (rv, rl, rp, rm) = sections_mut(r, self.ns, self.np);
        let inv_st = 1.0 / st;
        for k in 0..rv.len() {
            rl[k] *= self.c2 / st;
            rv[k] = (rv[k] + i_scale(dc / st, rl[k])) * inv_st;
        }
        let inv_pc = 1.0 / (st * self.c2);
        for k in 0..rp.len() {
            rm[k] *= inv_st;
            rp[k] = (rp[k] + i_scale(dc * self.c2 / st, rm[k])) * inv_pc;
        }
    }

    /// The real symmetric core of the factorization:
    ///
    /// ```text
    ///       [  M    A_w   0   B^T ]           A_w = c1 M + c2 nu K
    /// Z  =  [ A_w   -M   B^T   0  ]
    ///       [  0     B    0    0  ]
    ///       [  B     0    0    0  ]
    /// ```
    pub fn apply_z(&self, x: &[Complex64], out: &mut [Complex64]) {
        let ns = self.ns;
        let (xv, xl, xp, xm) = sections(x, ns, self.np);
        let (ov, ol, op_, om) = sections_mut(out, ns, self.np);
        let (xv0, xv1) = xv.split_at(ns);
        let (xl0, xl1) = xl.split_at(ns);
        let (ov0, ov1) = ov.split_at_mut(ns);
        let (ol0, ol1) = ol.split_at_mut(ns);
        // Velocity row: M v + A_w l + B^T m.
        self.mass_s.mul_complex(xv0, ov0);
        self.aw_s.mul_complex_add(1.0, xl0, ov0);
        self.bx_t.mul_complex_add(1.0, xm, ov0);
        self.mass_s.mul_complex(xv1, ov1);
        self.aw_s.mul_complex_add(1.0, xl1, ov1);
        self.by_t.mul_complex_add(1.0, xm, ov1);
        // Adjoint row: A_w v - M l + B^T p.
        self.aw_s.mul_complex(xv0, ol0);
        self.mass_s.mul_complex_add(-1.0, xl0, ol0);
        self.bx_t.mul_complex_add(1.0, xp, ol0);
        self.aw_s.mul_complex(xv1, ol1);
        self.mass_s.mul_complex_add(-1.0, xl1, ol1);
        self.by_t.mul_complex_add(1.0, xp, ol1);
        // Divergence rows: B l and B v.
        self.bx.mul_complex(xl0, op_);
        self.by.mul_complex_add(1.0, xl1, op_);
        self.bx.mul_complex(xv0, om);
        self.by.mul_complex_add(1.0, xv1, om);
    }

    /// Approximate inverse of the pressure Schur substitute:
    /// `out = (1 + c1) Kp^{-1} r + nu c2 Mp^{-1} r` with the elliptic and
    /// mass solves replaced by their configured approximations.
    pub fn apply_shat_inv(&self, r: &[Complex64], out: &mut [Complex64]) {
        let a = 1.0 + self.c1;
        let b = self.nu * self.c2;
        split_solve(
            |x| {
                let kp = self.kp_solve.solve(x);
                let mp = self.mp_solve.solve(x);
                (0..x.len()).map(|k| a * kp[k] + b * mp[k]).collect()
            },
            r,
            out,
        );
    }

    /// One application of the block-diagonal projector inverse
    /// `blkdiag(W, W, S, S)^{-1}` with `W = (1 + c1) M + c2 nu K` solved by
    /// V-cycles and the Schur substitute `S` by [`Self::apply_shat_inv`].
    /// This is a fixed linear map: every ingredient runs a fixed number of
    /// sweeps regardless of the data.
    pub fn apply_ptilde_inv(&self, r: &[Complex64], out: &mut [Complex64]) {
        let ns = self.ns;
        let (rv, rl, rp, rm) = sections(r, ns, self.np);
        let (ov, ol, op_, om) = sections_mut(out, ns, self.np);
        for c in 0..2 {
            let range = c * ns..(c + 1) * ns;
            split_solve(|x| self.w_solve.solve(x), &rv[range.clone()], &mut ov[range.clone()]);
            split_solve(|x| self.w_solve.solve(x), &rl[range.clone()], &mut ol[range]);
        }
        self.apply_shat_inv(rp, op_);
        self.apply_shat_inv(rm, om);
    }

    /// Dense SPD projector `blkdiag(W, W, B W^{-1} B^T, B W^{-1} B^T)` for
    /// verification on small problems.
    pub fn phat_dense(&self) -> Result<DenseMatrix<f64>> {
        self.guard_dense()?;
        let ws = DenseMatrix::from_csr(&self.w_s);
        let schur = self.schur_dense()?;
        let ns = self.ns;
        let nv = 2 * ns;
        let bs = self.block_dim();
        let mut a = DenseMatrix::zeros(bs, bs);
        a.set_block(0, 0, &ws);
        a.set_block(ns, ns, &ws);
        a.set_block(nv, nv, &ws);
        a.set_block(nv + ns, nv + ns, &ws);
        a.set_block(2 * nv, 2 * nv, &schur);
        a.set_block(2 * nv + self.np, 2 * nv + self.np, &schur);
        Ok(a)
    }

    /// Dense velocity Schur complement `B W^{-1} B^T` (verification only).
    pub fn schur_dense(&self) -> Result<DenseMatrix<f64>> {
        self.guard_dense()?;
        let lu = DenseMatrix::from_csr(&self.w_s).lu()?;
        let ns = self.ns;
        let np = self.np;
        let bxt = DenseMatrix::from_csr(&self.bx_t);
        let byt = DenseMatrix::from_csr(&self.by_t);
        let mut s = DenseMatrix::zeros(np, np);
        let mut t = vec![0.0f64; np];
        for c in 0..np {
            let mut colx: Vec<f64> = (0..ns).map(|r| bxt[(r, c)]).collect();
            let mut coly: Vec<f64> = (0..ns).map(|r| byt[(r, c)]).collect();
            lu.solve_in_place(&mut colx);
            lu.solve_in_place(&mut coly);
            self.bx.mul_vec(&colx, &mut t);
            self.by.mul_vec_add(1.0, &coly, &mut t);
            for r in 0..np {
                s[(r, c)] = t[r];
            }
        }
        Ok(s)
    }

    /// Exact inverse of the dense projector applied to a complex vector
    /// (verification only; factors on every call).
    pub fn apply_phat_inv(&self, r: &[Complex64], out: &mut [Complex64]) -> Result<()> {
        self.guard_dense()?;
        let wlu = DenseMatrix::from_csr(&self.w_s).lu()?;
        let slu = self.schur_dense()?.lu()?;
        let ns = self.ns;
        let (rv, rl, rp, rm) = sections(r, ns, self.np);
        let (ov, ol, op_, om) = sections_mut(out, ns, self.np);
        for c in 0..2 {
            let range = c * ns..(c + 1) * ns;
            split_solve(|x| wlu.solve(x), &rv[range.clone()], &mut ov[range.clone()]);
            split_solve(|x| wlu.solve(x), &rl[range.clone()], &mut ol[range]);
        }
        split_solve(|x| slu.solve(x), rp, op_);
        split_solve(|x| slu.solve(x), rm, om);
        Ok(())
    }

    /// Dense frequency block
    ///
    /// ```text
    ///       [ tau M        conj(d) M + tau nu K   0        tau B^T ]
    /// G  =  [ d M + tau nu K   -(tau/beta) M      tau B^T  0       ]
    ///       [ 0                tau B              0        0       ]
    ///       [ tau B            0                  0        0       ]
    /// ```
    ///
    /// assembled directly from the element matrices (verification only);
    /// the factored application never forms it.
    pub fn g_dense(&self) -> Result<DenseMatrix<Complex64>> {
        self.guard_dense()?;
        let ns = self.ns;
        let np = self.np;
        let nv = 2 * ns;
        let bs = self.block_dim();
        let tau = self.tau;
        let v0 = 0;
        let l0 = nv;
        let p0 = 2 * nv;
        let m0 = 2 * nv + np;
        let mut a = DenseMatrix::zeros(bs, bs);
        let re = |x: f64| Complex64::new(x, 0.0);
        for c in 0..2 {
            let o = c * ns;
            add_csr_block(&mut a, &self.mass_s, v0 + o, v0 + o, re(tau));
            add_csr_block(&mut a, &self.mass_s, v0 + o, l0 + o, self.d.conj());
            add_csr_block(&mut a, &self.stiff_scaled(), v0 + o, l0 + o, re(1.0));
            add_csr_block(&mut a, &self.mass_s, l0 + o, v0 + o, self.d);
            add_csr_block(&mut a, &self.stiff_scaled(), l0 + o, v0 + o, re(1.0));
            add_csr_block(&mut a, &self.mass_s, l0 + o, l0 + o, re(-tau / self.beta));
        }
        add_csr_block(&mut a, &self.bx_t, v0, m0, re(tau));
        add_csr_block(&mut a, &self.by_t, v0 + ns, m0, re(tau));
        add_csr_block(&mut a, &self.bx_t, l0, p0, re(tau));
        add_csr_block(&mut a, &self.by_t, l0 + ns, p0, re(tau));
        add_csr_block(&mut a, &self.bx, p0, l0, re(tau));
        add_csr_block(&mut a, &self.by, p0, l0 + ns, re(tau));
        add_csr_block(&mut a, &self.bx, m0, v0, re(tau));
        add_csr_block(&mut a, &self.by, m0, v0 + ns, re(tau));
        Ok(a)
    }

    fn stiff_scaled(&self) -> CsrMatrix<f64> {
        // tau nu K expressed through the stored combinations:
        // aw = c1 M + c2 nu K  =>  nu K = (aw - c1 M) / c2.
        let mut k = self.aw_s.add_scaled(1.0, &self.mass_s, -self.c1);
        k.scale(self.tau / self.c2);
        k
    }

    fn guard_dense(&self) -> Result<()> {
        if self.block_dim() > 4096 {
            return Err(Error::usage(format!(
                "dense verification of a {}-dim frequency block is out of scope",
                self.block_dim()
            )));
        }
        Ok(())
    }

    /// One linear-variant block solve: `T_r^{-1} P^{-1} T_l^{-1} r`.
    pub fn solve_direct(&self, r: &[Complex64]) -> Vec<Complex64> {
        let mut s = r.to_vec();
        self.apply_tl_inv(&mut s);
        let mut x = vec![Complex64::new(0.0, 0.0); r.len()];
        self.apply_ptilde_inv(&s, &mut x);
        self.apply_tr_inv(&mut x);
        x
    }

    /// Exact block solve `G^{-1} r` through the factorization with a dense
    /// core factorization (verification only).
    pub fn solve_exact(&self, r: &[Complex64]) -> Result<Vec<Complex64>> {
        self.guard_dense()?;
        let mut s = r.to_vec();
        self.apply_tl_inv(&mut s);
        let z = DenseMatrix::from_operator(self.block_dim(), |x, y| self.apply_z(x, y));
        let mut x = z.lu()?.solve(&s);
        self.apply_tr_inv(&mut x);
        Ok(x)
    }

    /// One nonlinear-variant block solve: inner GMRES on the real symmetric
    /// core, preconditioned by the block-diagonal projector, between the two
    /// triangular substitutions. Returns the solution, the inner iteration
    /// count, and whether the inner tolerance was met within the cap.
    pub fn solve_iterative(&self, r: &[Complex64], tol: f64, cap: usize) -> Result<(Vec<Complex64>, usize, bool)> {
        let mut s = r.to_vec();
        self.apply_tl_inv(&mut s);
        let cfg = KrylovConfig {
            tol,
            restart: cap,
            max_iters: cap,
            record_history: false,
        };
        let res = gmres(
            |x: &[Complex64], y: &mut [Complex64]| self.apply_z(x, y),
            |rr: &[Complex64], zz: &mut [Complex64]| self.apply_ptilde_inv(rr, zz),
            &s,
            &cfg,
        )?;
        let mut x = res.x;
        self.apply_tr_inv(&mut x);
        Ok((x, res.iterations, res.converged))
    }
}

#[derive(Clone, Copy)]
enum BlockMode {
    Direct,
    Exact,
    Iterative { tol: f64, cap: usize },
}

/// Frequency-block preconditioner for the self-adjoint control system.
pub struct StokesPreconditioner {
    layout: BlockLayout,
    grid: TimeGrid,
    fourier: TimeFourier,
    blocks: Vec<Arc<StokesBlockContext>>,
    workers: usize,
    /// Relative tolerance of the inner per-block solves (nonlinear variant).
    pub inner_tol: f64,
    /// Iteration cap of the inner per-block solves (nonlinear variant).
    pub inner_cap: usize,
}

impl StokesPreconditioner {
    /// Build the per-frequency contexts from an assembled discretization.
    ///
    /// The velocity operator must be self-adjoint (no convection); the
    /// triangular factorization does not exist otherwise and construction is
    /// refused.
    pub fn new(
        assembly: &Assembly,
        grid: &TimeGrid,
        beta: f64,
        nu: f64,
        params: &PrecondParams,
    ) -> Result<Self> {
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(Error::config(format!(
                "regularization weight must be positive and finite, got {beta}"
            )));
        }
        if !(nu > 0.0) || !nu.is_finite() {
            return Err(Error::config(format!(
                "viscosity must be positive and finite, got {nu}"
            )));
        }
        if !(params.inner_tol > 0.0 && params.inner_tol < 1.0) {
            return Err(Error::config(format!(
                "inner tolerance must lie in (0, 1), got {}",
                params.inner_tol
            )));
        }
        if params.inner_cap == 0 || params.cheb_iters == 0 {
            return Err(Error::config(
                "inner iteration cap and Chebyshev step count must be positive",
            ));
        }
        let ops = &assembly.ops;
        if ops.conv_s.norm_inf() > 0.0 {
            return Err(Error::usage(
                "the factored preconditioner needs a self-adjoint velocity operator; \
                 use the nonsymmetric frequency-block family for convective problems",
            ));
        }
        let layout = BlockLayout::new(grid.n_blocks(), ops.nv(), ops.np);
        let fourier = TimeFourier::new(grid);
        let spectrum = fourier.spectrum();
        let tau = grid.tau();

        let kp_solve = Arc::new(if params.exact_inner {
            EllipticSolve::from_hierarchy(vec![ops.stiff_p.clone()], vec![], params.mg)?
        } else {
            EllipticSolve::from_hierarchy(
                assembly.levels.iter().map(|lv| lv.stiff_p.clone()).collect(),
                assembly.prolong_p.clone(),
                params.mg,
            )?
        });
        let mp_solve = Arc::new(if params.exact_inner {
            MassApply::Direct(DenseMatrix::from_csr(&ops.mass_p).lu()?)
        } else {
            let (lo, hi) = pressure_mass_bounds();
            MassApply::Chebyshev(ChebyshevSolve::new(ops.mass_p.clone(), lo, hi, params.cheb_iters)?)
        });
        let mass_s = Arc::new(ops.mass_s.clone());
        let bx = Arc::new(ops.bx.clone());
        let by = Arc::new(ops.by.clone());
        let bx_t = Arc::new(ops.bx_t.clone());
        let by_t = Arc::new(ops.by_t.clone());

        let nb = grid.n_blocks();
        let mut blocks: Vec<Arc<StokesBlockContext>> = Vec::with_capacity(nb);
        for j in 0..nb {
            let d = spectrum.d(j);
            let (c1, c2) = block_constants(d, tau, beta);
            let mate = (nb - j) % nb;
            let (aw_s, w_s, w_solve) = if mate < j {
                // Mirrored frequency: conjugate d, bitwise-equal constants,
                // identical plans.
                let twin = &blocks[mate];
                (twin.aw_s.clone(), twin.w_s.clone(), twin.w_solve.clone())
            } else {
                let aw = CsrMatrix::linear_combination(&[(c1, &ops.mass_s), (c2 * nu, &ops.stiff_s)]);
                let w = CsrMatrix::linear_combination(&[(1.0 + c1, &ops.mass_s), (c2 * nu, &ops.stiff_s)]);
                let solve = if params.exact_inner {
                    EllipticSolve::from_hierarchy(vec![w.clone()], vec![], params.mg)?
                } else {
                    let mats = assembly
                        .levels
                        .iter()
                        .map(|lv| {
                            CsrMatrix::linear_combination(&[
                                (1.0 + c1, &lv.mass_s),
                                (c2 * nu, &lv.stiff_s),
                            ])
                        })
                        .collect();
                    EllipticSolve::from_hierarchy(mats, assembly.prolong_s.clone(), params.mg)?
                };
                (Arc::new(aw), Arc::new(w), Arc::new(solve))
            };
            blocks.push(Arc::new(StokesBlockContext {
                index: j,
                d,
                tau,
                beta,
                nu,
                c1,
                c2,
                ns: ops.ns,
                np: ops.np,
                mass_s: mass_s.clone(),
                aw_s,
                w_s,
                bx: bx.clone(),
                by: by.clone(),
                bx_t: bx_t.clone(),
                by_t: by_t.clone(),
                w_solve,
                kp_solve: kp_solve.clone(),
                mp_solve: mp_solve.clone(),
            }));
        }

        Ok(StokesPreconditioner {
            layout,
            grid: *grid,
            fourier,
            blocks,
            workers: parallel::resolve_workers(params.workers),
            inner_tol: params.inner_tol,
            inner_cap: params.inner_cap,
        })
    }

    /// Unknown layout of the space-time vectors this preconditioner acts on.
    pub fn layout(&self) -> BlockLayout {
        self.layout
    }

    /// Time grid the contexts were built for.
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    /// Worker threads used by the per-frequency loops.
    pub fn workers(&self) -> usize {
        self.workers
    }

    /// Per-frequency contexts (index `j` = frequency `j`).
    pub fn contexts(&self) -> &[Arc<StokesBlockContext>] {
        &self.blocks
    }

    /// One context.
    pub fn context(&self, j: usize) -> &StokesBlockContext {
        &self.blocks[j]
    }

    /// Linear variant: transform, one projector solve per frequency block,
    /// transform back. A fixed linear map, usable inside plain GMRES.
    pub fn apply_linear(&self, r: &[f64], out: &mut [f64]) -> Result<()> {
        self.apply_blocks(r, out, BlockMode::Direct).map(|_| ())
    }

    /// Nonlinear variant: transform, inner Krylov solve per frequency block,
    /// transform back. The map changes with the data, so the outer iteration
    /// must be flexible.
    pub fn apply_nonlinear(&self, r: &[f64], out: &mut [f64]) -> Result<InnerSolveStats> {
        self.apply_blocks(
            r,
            out,
            BlockMode::Iterative {
                tol: self.inner_tol,
                cap: self.inner_cap,
            },
        )
    }

    /// Verification variant: exact per-frequency solves, realizing the exact
    /// inverse of the circulant-modified system up to transform roundoff.
    pub fn apply_exact(&self, r: &[f64], out: &mut [f64]) -> Result<()> {
        self.apply_blocks(r, out, BlockMode::Exact).map(|_| ())
    }

    fn apply_blocks(&self, r: &[f64], out: &mut [f64], mode: BlockMode) -> Result<InnerSolveStats> {
        if r.len() != self.layout.len() || out.len() != self.layout.len() {
            return Err(Error::usage(format!(
                "vector length {} does not match the space-time layout length {}",
                r.len(),
                self.layout.len()
            )));
        }
        let rnorm = crate::scalar::norm2(r);
        let mut bv = BlockVector::from_data(self.layout, promote(r))?;
        self.fourier.forward(&mut bv);
        let mut g = to_block_diagonal_order(&bv.data, self.layout);
        let bs = self.layout.block_size();
        let nb = self.layout.nb;
        symmetrize_conjugate_pairs(&mut g, nb, bs);

        let results = parallel::map_indexed(self.workers, &self.blocks, |j, ctx| {
            let slice = &g[j * bs..(j + 1) * bs];
            match mode {
                BlockMode::Direct => Ok((ctx.solve_direct(slice), 0usize, true)),
                BlockMode::Exact => ctx.solve_exact(slice).map(|x| (x, 0usize, true)),
                BlockMode::Iterative { tol, cap } => ctx.solve_iterative(slice, tol, cap),
            }
        })?;

        let mut stats = InnerSolveStats {
            iterations: Vec::with_capacity(nb),
            flagged: Vec::new(),
        };
        for (j, res) in results.into_iter().enumerate() {
            let (x, iters, ok) = res?;
            g[j * bs..(j + 1) * bs].copy_from_slice(&x);
            stats.iterations.push(iters);
            if !ok {
                stats.flagged.push(j);
            }
        }

        let back = from_block_diagonal_order(&g, self.layout);
        let mut bv2 = BlockVector::from_data(self.layout, back)?;
        self.fourier.inverse(&mut bv2);
        let imag_norm = bv2
            .data
            .iter()
            .map(|z| z.im * z.im)
            .sum::<f64>()
            .sqrt();
        if imag_norm > 1e-10 * rnorm {
            return Err(Error::numerical(format!(
                "assembled result of a real input has imaginary residue {imag_norm:.3e} \
                 (input norm {rnorm:.3e}); conjugate pairing is broken"
            )));
        }
        for (o, z) in out.iter_mut().zip(&bv2.data) {
            *o = z.re;
        }
        Ok(stats)
    }
}

/// Project transformed data onto the conjugate-symmetric subspace. For real
/// input the data is already conjugate-symmetric up to transform roundoff;
/// after this projection mirrored blocks are *exact* conjugates, so their
/// (bitwise conjugate-symmetric) solves keep the assembled result real.
pub(crate) fn symmetrize_conjugate_pairs(g: &mut [Complex64], nb: usize, bs: usize) {
    for z in g[..bs].iter_mut() {
        z.im = 0.0;
    }
    for j in 1..=(nb / 2) {
        let mate = nb - j;
        if mate == j {
            for z in g[j * bs..(j + 1) * bs].iter_mut() {
                z.im = 0.0;
            }
        } else {
            for k in 0..bs {
                let a = g[j * bs + k];
                let b = g[mate * bs + k];
                let m = Complex64::new(0.5 * (a.re + b.re), 0.5 * (a.im - b.im));
                g[j * bs + k] = m;
                g[mate * bs + k] = m.conj();
            }
        }
    }
}
