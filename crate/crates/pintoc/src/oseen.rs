//! Frequency-block preconditioning for the convection-augmented control
//! system.
//!
//! Convection makes the velocity operator nonsymmetric, which removes the
//! triangular factorization the [`crate::stokes`] family is built on. Each
//! frequency block is therefore treated in its original saddle form:
//!
//! * the velocity half-system (a 2x2 saddle block in the state and adjoint
//!   velocities) is approximated by a fixed-count preconditioned Uzawa
//!   iteration whose Schur substitute is the mass-augmented product
//!   `(1/tau) Q_j M^{-1} Q_j^H` with `Q_j = d_j M + tau L + (tau/sqrt(beta)) M`,
//! * the pressure Schur complement is approximated by a commutator-style
//!   sandwich of divergence-free projections: mass solves, a coupled
//!   pressure-space block multiply, and stiffness solves,
//! * the two halves combine block-triangularly, and an inner Krylov solve
//!   per frequency block (preconditioned by that combination) drives the
//!   residual down to a fixed relative tolerance.
//!
//! The time-direction diagonalization pipeline (Fourier transform, block
//! reordering, conjugate-pair symmetrization) is shared with the symmetric
//! family and behaves identically.

use std::sync::Arc;

use num_complex::Complex64;

use crate::chebyshev::{pressure_mass_bounds, velocity_mass_bounds, ChebyshevSolve};
use crate::circulant::{
    from_block_diagonal_order, to_block_diagonal_order, BlockLayout, BlockVector, TimeFourier,
    TimeGrid,
};
use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::fem::Assembly;
use crate::krylov::{gmres, KrylovConfig};
use crate::multigrid::{EllipticSolve, MgParams};
use crate::parallel;
use crate::scalar::promote;
use crate::sparse::CsrMatrix;
use crate::stokes::{
    add_csr_block, sections, sections_mut, split_solve, symmetrize_conjugate_pairs,
    InnerSolveStats, MassApply,
};

/// Tuning knobs of the nonsymmetric frequency-block preconditioner.
#[derive(Debug, Clone, Copy)]
pub struct OseenParams {
    /// Multigrid settings for the `Q_j` and pressure-stiffness solves.
    pub mg: MgParams,
    /// Chebyshev step count for the mass-matrix approximations.
    pub cheb_iters: usize,
    /// Fixed iteration count of the velocity-half Uzawa sweep.
    pub uzawa_iters: usize,
    /// Uzawa relaxation parameter; the midpoint of the Schur-substitute
    /// eigenvalue interval `[1/2, 1]` gives `3/4`.
    pub mu: f64,
    /// Relative tolerance of the inner per-block Krylov solves.
    pub inner_tol: f64,
    /// Iteration cap of the inner per-block Krylov solves.
    pub inner_cap: usize,
    /// Worker threads for the per-block loops (`0` = automatic).
    pub workers: usize,
    /// Replace every inner approximation by an exact factorization
    /// (verification switch for small problems).
    pub exact_inner: bool,
}

impl Default for OseenParams {
    fn default() -> Self {
        OseenParams {
            mg: MgParams::default(),
            cheb_iters: 10,
            uzawa_iters: 6,
            mu: 0.75,
            inner_tol: 1e-2,
            inner_cap: 200,
            workers: 0,
            exact_inner: false,
        }
    }
}

/// A complex elliptic solve that may be stored as the conjugate view of a
/// mirrored frequency's plan: the mirrored matrices are exact entrywise
/// conjugates, so conjugating input and output reuses the mate's plan and
/// keeps mirror outputs bitwise conjugate.
struct ConjSolve {
    plan: Arc<EllipticSolve<Complex64>>,
    conjugated: bool,
}

impl ConjSolve {
    fn solve(&self, b: &[Complex64]) -> Vec<Complex64> {
        if self.conjugated {
            let bc: Vec<Complex64> = b.iter().map(|z| z.conj()).collect();
            let mut x = self.plan.solve(&bc);
            for z in x.iter_mut() {
                *z = z.conj();
            }
            x
        } else {
            self.plan.solve(b)
        }
    }
}

/// Everything one frequency block of the convective system needs, immutable
/// after construction so the per-block loops can run on any worker.
pub struct OseenBlockContext {
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
    ns: usize,
    np: usize,
    mass_s: Arc<CsrMatrix<f64>>,
    /// `L = nu K + N` on the scalar velocity space.
    l_s: Arc<CsrMatrix<f64>>,
    l_s_t: Arc<CsrMatrix<f64>>,
    bx: Arc<CsrMatrix<f64>>,
    by: Arc<CsrMatrix<f64>>,
    bx_t: Arc<CsrMatrix<f64>>,
    by_t: Arc<CsrMatrix<f64>>,
    mass_p: Arc<CsrMatrix<f64>>,
    /// `L_p = nu K_p + N_p` on the pressure space.
    l_p: Arc<CsrMatrix<f64>>,
    l_p_t: Arc<CsrMatrix<f64>>,
    q_solve: ConjSolve,
    qh_solve: ConjSolve,
    mhat: Arc<MassApply>,
    mp_solve: Arc<MassApply>,
    kp_solve: Arc<EllipticSolve<f64>>,
    uzawa_iters: usize,
    mu: f64,
}

impl OseenBlockContext {
    /// Dimension of one frequency block: `2 n_v + 2 n_p`.
    pub fn block_dim(&self) -> usize {
        4 * self.ns + 2 * self.np
    }

    /// Scalar-velocity and pressure dimensions.
    pub fn dims(&self) -> (usize, usize) {
        (self.ns, self.np)
    }

    /// Velocity-space mass multiply (both components).
    fn mul_mass_v(&self, x: &[Complex64], y: &mut [Complex64]) {
        let ns = self.ns;
        for c in 0..2 {
            self.mass_s
                .mul_complex(&x[c * ns..(c + 1) * ns], &mut y[c * ns..(c + 1) * ns]);
        }
    }

    /// Divergence `B x` of a velocity-sized vector.
    fn mul_div(&self, x: &[Complex64], y: &mut [Complex64]) {
        let ns = self.ns;
        self.bx.mul_complex(&x[..ns], y);
        self.by.mul_complex_add(1.0, &x[ns..], y);
    }

    /// `A_j x = (d_j M + tau L) x`, per velocity component.
    fn apply_a(&self, x: &[Complex64], y: &mut [Complex64]) {
        let ns = self.ns;
        let mut t = vec![Complex64::new(0.0, 0.0); ns];
        for c in 0..2 {
            let xs = &x[c * ns..(c + 1) * ns];
            let ys = &mut y[c * ns..(c + 1) * ns];
            self.mass_s.mul_complex(xs, ys);
            for z in ys.iter_mut() {
                *z *= self.d;
            }
            self.l_s.mul_complex(xs, &mut t);
            for k in 0..ns {
                ys[k] += self.tau * t[k];
            }
        }
    }

    /// `A_j^H x = (conj(d_j) M + tau L^T) x`, per velocity component.
    fn apply_ah(&self, x: &[Complex64], y: &mut [Complex64]) {
        let ns = self.ns;
        let dc = self.d.conj();
        let mut t = vec![Complex64::new(0.0, 0.0); ns];
        for c in 0..2 {
            let xs = &x[c * ns..(c + 1) * ns];
            let ys = &mut y[c * ns..(c + 1) * ns];
            self.mass_s.mul_complex(xs, ys);
            for z in ys.iter_mut() {
                *z *= dc;
            }
            self.l_s_t.mul_complex(xs, &mut t);
            for k in 0..ns {
                ys[k] += self.tau * t[k];
            }
        }
    }

    /// Velocity mass approximation applied to a complex vector.
    fn mhat_solve(&self, r: &[Complex64], out: &mut [Complex64]) {
        let ns = self.ns;
        for c in 0..2 {
            split_solve(
                |b| self.mhat.solve(b),
                &r[c * ns..(c + 1) * ns],
                &mut out[c * ns..(c + 1) * ns],
            );
        }
    }

    /// Approximate inverse of the velocity Schur substitute:
    /// `tau * Q_j^{-H} M Q_j^{-1}`, factor-wise per component.
    fn apply_velocity_schur_inv(&self, r: &[Complex64]) -> Vec<Complex64> {
        let ns = self.ns;
        let mut out = vec![Complex64::new(0.0, 0.0); r.len()];
        let mut t = vec![Complex64::new(0.0, 0.0); ns];
        for c in 0..2 {
            let y = self.q_solve.solve(&r[c * ns..(c + 1) * ns]);
            self.mass_s.mul_complex(&y, &mut t);
            let w = self.qh_solve.solve(&t);
            for k in 0..ns {
                out[c * ns + k] = self.tau * w[k];
            }
        }
        out
    }

    /// Fixed-count preconditioned Uzawa sweep on the velocity half-system
    ///
    /// ```text
    /// [ tau M     A^H          ] (x1)   (b1)
    /// [  A    -(tau/beta) M    ] (x2) = (b2)
    /// ```
    ///
    /// from the zero initial guess. A fixed linear map in `(b1, b2)`.
    pub fn apply_uzawa(&self, b1: &[Complex64], b2: &[Complex64]) -> (Vec<Complex64>, Vec<Complex64>) {
        let nv = 2 * self.ns;
        debug_assert_eq!(b1.len(), nv);
        debug_assert_eq!(b2.len(), nv);
        let zero = Complex64::new(0.0, 0.0);
        let mut x1 = vec![zero; nv];
        let mut x2 = vec![zero; nv];
        let mut t = vec![zero; nv];
        let mut z = vec![zero; nv];
        let inv_tau = 1.0 / self.tau;
        let inv_mu = 1.0 / self.mu;
        let w = self.tau / self.beta;
        for _ in 0..self.uzawa_iters {
            // x1 += (1/tau) Mhat^{-1} (b1 - tau M x1 - A^H x2)
            let mut r1 = b1.to_vec();
            self.mul_mass_v(&x1, &mut t);
            for k in 0..nv {
                r1[k] -= self.tau * t[k];
            }
            self.apply_ah(&x2, &mut t);
            for k in 0..nv {
                r1[k] -= t[k];
            }
            self.mhat_solve(&r1, &mut z);
            for k in 0..nv {
                x1[k] += inv_tau * z[k];
            }
            // x2 -= (1/mu) Shat^{-1} (b2 - A x1 + (tau/beta) M x2)
            let mut r2 = b2.to_vec();
            self.apply_a(&x1, &mut t);
            for k in 0..nv {
                r2[k] -= t[k];
            }
            self.mul_mass_v(&x2, &mut t);
            for k in 0..nv {
                r2[k] += w * t[k];
            }
            let s = self.apply_velocity_schur_inv(&r2);
            for k in 0..nv {
                x2[k] -= inv_mu * s[k];
            }
        }
        (x1, x2)
    }

    /// Approximate inverse of the pressure Schur complement: swap halves and
    /// mass-solve, multiply the coupled pressure-space block, swap halves
    /// and stiffness-solve.
    pub fn apply_schur_inv(&self, r3: &[Complex64], r4: &[Complex64]) -> (Vec<Complex64>, Vec<Complex64>) {
        let np = self.np;
        debug_assert_eq!(r3.len(), np);
        debug_assert_eq!(r4.len(), np);
        let zero = Complex64::new(0.0, 0.0);
        let inv_tau = 1.0 / self.tau;
        // w = [[0, Mp^{-1}/tau], [Mp^{-1}/tau, 0]] (r3, r4)
        let mut w1 = vec![zero; np];
        let mut w2 = vec![zero; np];
        split_solve(|b| self.mp_solve.solve(b), r4, &mut w1);
        split_solve(|b| self.mp_solve.solve(b), r3, &mut w2);
        for z in w1.iter_mut() {
            *z *= inv_tau;
        }
        for z in w2.iter_mut() {
            *z *= inv_tau;
        }
        // Coupled middle block
        //   t1 = tau Mp w1 + (conj(d) Mp + tau Lp^T) w2
        //   t2 = (d Mp + tau Lp) w1 - (tau/beta) Mp w2
        let mut mp_w1 = vec![zero; np];
        let mut mp_w2 = vec![zero; np];
        let mut lp_w1 = vec![zero; np];
        let mut lpt_w2 = vec![zero; np];
        self.mass_p.mul_complex(&w1, &mut mp_w1);
        self.mass_p.mul_complex(&w2, &mut mp_w2);
        self.l_p.mul_complex(&w1, &mut lp_w1);
        self.l_p_t.mul_complex(&w2, &mut lpt_w2);
        let dc = self.d.conj();
        let wb = self.tau / self.beta;
        let mut t1 = vec![zero; np];
        let mut t2 = vec![zero; np];
        for k in 0..np {
            t1[k] = self.tau * mp_w1[k] + dc * mp_w2[k] + self.tau * lpt_w2[k];
            t2[k] = self.d * mp_w1[k] + self.tau * lp_w1[k] - wb * mp_w2[k];
        }
        // y = [[0, Kp^{-1}/tau], [Kp^{-1}/tau, 0]] (t1, t2)
        let mut y3 = vec![zero; np];
        let mut y4 = vec![zero; np];
        split_solve(|b| self.kp_solve.solve(b), &t2, &mut y3);
        split_solve(|b| self.kp_solve.solve(b), &t1, &mut y4);
        for z in y3.iter_mut() {
            *z *= inv_tau;
        }
        for z in y4.iter_mut() {
            *z *= inv_tau;
        }
        (y3, y4)
    }

    /// Block-triangular preconditioner application: the Uzawa sweep on the
    /// velocity half, then the negated pressure-Schur solve of the
    /// divergence-corrected residual (note the crossed products `B y2`,
    /// `B y1`, matching the saddle coupling). A fixed linear map.
    pub fn apply_puz_inv(&self, r: &[Complex64]) -> Vec<Complex64> {
        let (ns, np) = (self.ns, self.np);
        let (r1, r2, r3, r4) = sections(r, ns, np);
        let (y1, y2) = self.apply_uzawa(r1, r2);
        let zero = Complex64::new(0.0, 0.0);
        let mut by2 = vec![zero; np];
        let mut by1 = vec![zero; np];
        self.mul_div(&y2, &mut by2);
        self.mul_div(&y1, &mut by1);
        let s3: Vec<Complex64> = (0..np).map(|k| r3[k] - self.tau * by2[k]).collect();
        let s4: Vec<Complex64> = (0..np).map(|k| r4[k] - self.tau * by1[k]).collect();
        let (mut y3, mut y4) = self.apply_schur_inv(&s3, &s4);
        for z in y3.iter_mut() {
            *z = -*z;
        }
        for z in y4.iter_mut() {
            *z = -*z;
        }
        let mut out = Vec::with_capacity(self.block_dim());
        out.extend_from_slice(&y1);
        out.extend_from_slice(&y2);
        out.extend_from_slice(&y3);
        out.extend_from_slice(&y4);
        out
    }

    /// The frequency block itself, in `(v, lambda, p, mu)` section order:
    ///
    /// ```text
    ///       [ tau M      A^H        0      tau B^T ]     A = d M + tau L
    /// G  =  [  A     -(tau/b) M  tau B^T     0     ]
    ///       [  0       tau B        0        0     ]
    ///       [ tau B      0          0        0     ]
    /// ```
    pub fn apply_g(&self, x: &[Complex64], out: &mut [Complex64]) {
        let (ns, np) = (self.ns, self.np);
        let nv = 2 * ns;
        let tau = self.tau;
        let (xv, xl, xp, xm) = sections(x, ns, np);
        let (ov, ol, op_, om) = sections_mut(out, ns, np);
        let mut t = vec![Complex64::new(0.0, 0.0); nv];
        // Velocity row: tau M v + A^H l + tau B^T m.
        self.mul_mass_v(xv, ov);
        for z in ov.iter_mut() {
            *z *= tau;
        }
        self.apply_ah(xl, &mut t);
        for k in 0..nv {
            ov[k] += t[k];
        }
        {
            let (ov0, ov1) = ov.split_at_mut(ns);
            self.bx_t.mul_complex_add(tau, xm, ov0);
            self.by_t.mul_complex_add(tau, xm, ov1);
        }
        // Adjoint row: A v - (tau/beta) M l + tau B^T p.
        self.apply_a(xv, ol);
        self.mul_mass_v(xl, &mut t);
        let w = tau / self.beta;
        for k in 0..nv {
            ol[k] -= w * t[k];
        }
        {
            let (ol0, ol1) = ol.split_at_mut(ns);
            self.bx_t.mul_complex_add(tau, xp, ol0);
            self.by_t.mul_complex_add(tau, xp, ol1);
        }
        // Divergence rows: tau B l and tau B v.
        self.mul_div(xl, op_);
        for z in op_.iter_mut() {
            *z *= tau;
        }
        self.mul_div(xv, om);
        for z in om.iter_mut() {
            *z *= tau;
        }
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

    /// Dense frequency block (verification only).
    pub fn g_dense(&self) -> Result<DenseMatrix<Complex64>> {
        self.guard_dense()?;
        let (ns, np) = (self.ns, self.np);
        let nv = 2 * ns;
        let bs = self.block_dim();
        let tau = self.tau;
        let v0 = 0;
        let l0 = nv;
        let p0 = 2 * nv;
        let m0 = 2 * nv + np;
        let re = |x: f64| Complex64::new(x, 0.0);
        let mut a = DenseMatrix::zeros(bs, bs);
        for c in 0..2 {
            let o = c * ns;
            add_csr_block(&mut a, &self.mass_s, v0 + o, v0 + o, re(tau));
            add_csr_block(&mut a, &self.mass_s, v0 + o, l0 + o, self.d.conj());
            add_csr_block(&mut a, &self.l_s_t, v0 + o, l0 + o, re(tau));
            add_csr_block(&mut a, &self.mass_s, l0 + o, v0 + o, self.d);
            add_csr_block(&mut a, &self.l_s, l0 + o, v0 + o, re(tau));
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

    /// Dense velocity half-block (verification only):
    /// `[[tau M, A^H], [A, -(tau/beta) M]]` on one scalar component.
    pub fn g11_scalar_dense(&self) -> Result<DenseMatrix<Complex64>> {
        self.guard_dense()?;
        let ns = self.ns;
        let tau = self.tau;
        let re = |x: f64| Complex64::new(x, 0.0);
        let mut a = DenseMatrix::zeros(2 * ns, 2 * ns);
        add_csr_block(&mut a, &self.mass_s, 0, 0, re(tau));
        add_csr_block(&mut a, &self.mass_s, 0, ns, self.d.conj());
        add_csr_block(&mut a, &self.l_s_t, 0, ns, re(tau));
        add_csr_block(&mut a, &self.mass_s, ns, 0, self.d);
        add_csr_block(&mut a, &self.l_s, ns, 0, re(tau));
        add_csr_block(&mut a, &self.mass_s, ns, ns, re(-tau / self.beta));
        Ok(a)
    }

    /// Dense true Schur complement of the velocity half-block on one scalar
    /// component: `(tau/beta) M + (1/tau) A M^{-1} A^H` (verification only).
    pub fn velocity_schur_dense(&self) -> Result<DenseMatrix<Complex64>> {
        self.guard_dense()?;
        velocity_schur_from_parts(&self.mass_s, &self.l_s, self.d, self.tau, self.beta)
    }

    /// Dense velocity Schur substitute on one scalar component:
    /// `(1/tau) Q M^{-1} Q^H` with `Q = A + (tau/sqrt(beta)) M`
    /// (verification only).
    pub fn velocity_schur_hat_dense(&self) -> Result<DenseMatrix<Complex64>> {
        self.guard_dense()?;
        velocity_schur_hat_from_parts(&self.mass_s, &self.l_s, self.d, self.tau, self.beta)
    }

    /// Exact block solve through a dense factorization (verification only).
    pub fn solve_exact(&self, r: &[Complex64]) -> Result<Vec<Complex64>> {
        let g = self.g_dense()?;
        Ok(g.lu()?.solve(r))
    }

    /// One nonlinear-variant block solve: inner GMRES on the frequency
    /// block, preconditioned by the Uzawa/Schur triangular combination.
    /// Returns the solution, the inner iteration count, and whether the
    /// tolerance was met within the cap.
    pub fn solve_iterative(&self, r: &[Complex64], tol: f64, cap: usize) -> Result<(Vec<Complex64>, usize, bool)> {
        let cfg = KrylovConfig {
            tol,
            restart: cap,
            max_iters: cap,
            record_history: false,
        };
        let res = gmres(
            |x: &[Complex64], y: &mut [Complex64]| self.apply_g(x, y),
            |rr: &[Complex64], zz: &mut [Complex64]| zz.copy_from_slice(&self.apply_puz_inv(rr)),
            r,
            &cfg,
        )?;
        Ok((res.x, res.iterations, res.converged))
    }
}

/// `(tau/beta) M + (1/tau) A M^{-1} A^H` with `A = d M + tau L`.
fn velocity_schur_from_parts(
    mass: &CsrMatrix<f64>,
    l: &CsrMatrix<f64>,
    d: Complex64,
    tau: f64,
    beta: f64,
) -> Result<DenseMatrix<Complex64>> {
    let ns = mass.nrows();
    let m = DenseMatrix::from_csr(mass);
    let minv = m.inverse()?.to_complex();
    let mut a = DenseMatrix::zeros(ns, ns);
    add_csr_block(&mut a, mass, 0, 0, d);
    add_csr_block(&mut a, l, 0, 0, Complex64::new(tau, 0.0));
    let ah = DenseMatrix::from_fn(ns, ns, |r, c| a[(c, r)].conj());
    let mut s = a.matmul(&minv).matmul(&ah);
    s.scale(Complex64::new(1.0 / tau, 0.0));
    let mut mt = m.to_complex();
    mt.scale(Complex64::new(tau / beta, 0.0));
    Ok(s.add(&mt))
}

/// `(1/tau) Q M^{-1} Q^H` with `Q = d M + tau L + (tau/sqrt(beta)) M`.
fn velocity_schur_hat_from_parts(
    mass: &CsrMatrix<f64>,
    l: &CsrMatrix<f64>,
    d: Complex64,
    tau: f64,
    beta: f64,
) -> Result<DenseMatrix<Complex64>> {
    let ns = mass.nrows();
    let minv = DenseMatrix::from_csr(mass).inverse()?.to_complex();
    let alpha = d + tau / beta.sqrt();
    let mut q = DenseMatrix::zeros(ns, ns);
    add_csr_block(&mut q, mass, 0, 0, alpha);
    add_csr_block(&mut q, l, 0, 0, Complex64::new(tau, 0.0));
    let qh = DenseMatrix::from_fn(ns, ns, |r, c| q[(c, r)].conj());
    let mut s = q.matmul(&minv).matmul(&qh);
    s.scale(Complex64::new(1.0 / tau, 0.0));
    Ok(s)
}

#[derive(Clone, Copy)]
enum BlockMode {
    Exact,
    Iterative { tol: f64, cap: usize },
}

/// Frequency-block preconditioner for the convective control system.
pub struct OseenPreconditioner {
    layout: BlockLayout,
    grid: TimeGrid,
    fourier: TimeFourier,
    blocks: Vec<Arc<OseenBlockContext>>,
    workers: usize,
    /// Relative tolerance of the inner per-block solves.
    pub inner_tol: f64,
    /// Iteration cap of the inner per-block solves.
    pub inner_cap: usize,
}

impl OseenPreconditioner {
    /// Build the per-frequency contexts from an assembled discretization.
    /// Works for any wind, including none (the symmetric family is then the
    /// better choice, but this one stays valid).
    pub fn new(
        assembly: &Assembly,
        grid: &TimeGrid,
        beta: f64,
        nu: f64,
        params: &OseenParams,
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
        if params.uzawa_iters == 0 {
            return Err(Error::config("the Uzawa sweep needs at least one iteration"));
        }
        if !(params.mu > 0.0 && params.mu < 2.0) {
            return Err(Error::config(format!(
                "Uzawa relaxation must lie in (0, 2), got {}",
                params.mu
            )));
        }
        let ops = &assembly.ops;
        let layout = BlockLayout::new(grid.n_blocks(), ops.nv(), ops.np);
        let fourier = TimeFourier::new(grid);
        let spectrum = fourier.spectrum();
        let tau = grid.tau();

        let l_s = Arc::new(CsrMatrix::linear_combination(&[
            (nu, &ops.stiff_s),
            (1.0, &ops.conv_s),
        ]));
        let l_s_t = Arc::new(l_s.transpose());
        let l_p = Arc::new(CsrMatrix::linear_combination(&[
            (nu, &ops.stiff_p),
            (1.0, &ops.conv_p),
        ]));
        let l_p_t = Arc::new(l_p.transpose());
        let mass_s = Arc::new(ops.mass_s.clone());
        let mass_p = Arc::new(ops.mass_p.clone());
        let bx = Arc::new(ops.bx.clone());
        let by = Arc::new(ops.by.clone());
        let bx_t = Arc::new(ops.bx_t.clone());
        let by_t = Arc::new(ops.by_t.clone());

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
        let mhat = Arc::new(if params.exact_inner {
            MassApply::Direct(DenseMatrix::from_csr(&ops.mass_s).lu()?)
        } else {
            let (lo, hi) = velocity_mass_bounds();
            MassApply::Chebyshev(ChebyshevSolve::new(ops.mass_s.clone(), lo, hi, params.cheb_iters)?)
        });

        // Complex copies of the scalar-velocity hierarchy for the Q plans.
        struct LevelC {
            mass: CsrMatrix<Complex64>,
            stiff: CsrMatrix<Complex64>,
            conv: CsrMatrix<Complex64>,
            conv_t: CsrMatrix<Complex64>,
        }
        let levels_c: Vec<LevelC> = if params.exact_inner {
            vec![LevelC {
                mass: ops.mass_s.to_complex(),
                stiff: ops.stiff_s.to_complex(),
                conv: ops.conv_s.to_complex(),
                conv_t: ops.conv_s.transpose().to_complex(),
            }]
        } else {
            assembly
                .levels
                .iter()
                .map(|lv| LevelC {
                    mass: lv.mass_s.to_complex(),
                    stiff: lv.stiff_s.to_complex(),
                    conv: lv.conv_s.to_complex(),
                    conv_t: lv.conv_s.transpose().to_complex(),
                })
                .collect()
        };
        let prolong_c: Vec<CsrMatrix<Complex64>> = if params.exact_inner {
            vec![]
        } else {
            assembly.prolong_s.iter().map(|p| p.to_complex()).collect()
        };

        let nb = grid.n_blocks();
        let shift = tau / beta.sqrt();
        let re = |x: f64| Complex64::new(x, 0.0);
        let mut blocks: Vec<Arc<OseenBlockContext>> = Vec::with_capacity(nb);
        for j in 0..nb {
            let d = spectrum.d(j);
            let mate = (nb - j) % nb;
            let (q_solve, qh_solve) = if mate < j {
                // Mirrored frequency: the matrices are exact entrywise
                // conjugates, so reuse the mate's plans in conjugate view.
                let twin = &blocks[mate];
                (
                    ConjSolve {
                        plan: twin.q_solve.plan.clone(),
                        conjugated: true,
                    },
                    ConjSolve {
                        plan: twin.qh_solve.plan.clone(),
                        conjugated: true,
                    },
                )
            } else {
                let alpha = d + shift;
                let q_mats: Vec<CsrMatrix<Complex64>> = levels_c
                    .iter()
                    .map(|lv| {
                        CsrMatrix::linear_combination(&[
                            (alpha, &lv.mass),
                            (re(tau * nu), &lv.stiff),
                            (re(tau), &lv.conv),
                        ])
                    })
                    .collect();
                let qh_mats: Vec<CsrMatrix<Complex64>> = levels_c
                    .iter()
                    .map(|lv| {
                        CsrMatrix::linear_combination(&[
                            (alpha.conj(), &lv.mass),
                            (re(tau * nu), &lv.stiff),
                            (re(tau), &lv.conv_t),
                        ])
                    })
                    .collect();
                (
                    ConjSolve {
                        plan: Arc::new(EllipticSolve::from_hierarchy(
                            q_mats,
                            prolong_c.clone(),
                            params.mg,
                        )?),
                        conjugated: false,
                    },
                    ConjSolve {
                        plan: Arc::new(EllipticSolve::from_hierarchy(
                            qh_mats,
                            prolong_c.clone(),
                            params.mg,
                        )?),
                        conjugated: false,
                    },
                )
            };
            blocks.push(Arc::new(OseenBlockContext {
                index: j,
                d,
                tau,
                beta,
                nu,
                ns: ops.ns,
                np: ops.np,
                mass_s: mass_s.clone(),
                l_s: l_s.clone(),
                l_s_t: l_s_t.clone(),
                bx: bx.clone(),
                by: by.clone(),
                bx_t: bx_t.clone(),
                by_t: by_t.clone(),
                mass_p: mass_p.clone(),
                l_p: l_p.clone(),
                l_p_t: l_p_t.clone(),
                q_solve,
                qh_solve,
                mhat: mhat.clone(),
                mp_solve: mp_solve.clone(),
                kp_solve: kp_solve.clone(),
                uzawa_iters: params.uzawa_iters,
                mu: params.mu,
            }));
        }

        Ok(OseenPreconditioner {
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
    pub fn contexts(&self) -> &[Arc<OseenBlockContext>] {
        &self.blocks
    }

    /// One context.
    pub fn context(&self, j: usize) -> &OseenBlockContext {
        &self.blocks[j]
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
        let imag_norm = bv2.data.iter().map(|z| z.im * z.im).sum::<f64>().sqrt();
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
