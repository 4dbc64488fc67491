//! Geometric multigrid V-cycles with successive-over-relaxation smoothing,
//! for real SPD operators (velocity combinations, pressure stiffness) and
//! complex shifted operators alike.
//!
//! A plan owns the per-level matrices (re-assembled geometrically by the
//! caller, coarsest first), the nodal-interpolation prolongations, their
//! transposes as restrictions, and a dense LU factorization of the coarsest
//! matrix. One application runs a fixed number of V-cycles from a zero
//! initial guess, which makes it a fixed linear map - the property that
//! lets plain (non-flexible) Krylov methods sit on top of it.

use crate::dense::{DenseMatrix, LuFactors};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::sparse::CsrMatrix;

/// Smoothing and cycling parameters.
#[derive(Debug, Clone, Copy)]
pub struct MgParams {
    /// V-cycles per application.
    pub cycles: usize,
    /// Forward smoothing sweeps before coarse correction.
    pub pre_sweeps: usize,
    /// Backward smoothing sweeps after coarse correction.
    pub post_sweeps: usize,
    /// Relaxation factor (1.0 = Gauss-Seidel).
    pub omega: f64,
}

impl Default for MgParams {
    fn default() -> Self {
        MgParams {
            cycles: 4,
            pre_sweeps: 2,
            post_sweeps: 2,
            omega: 1.0,
        }
    }
}

/// One forward SOR sweep in ascending row order, using updated entries
/// immediately: `x_i = (1-omega) x_i + omega (b_i - sum_{j!=i} a_ij x_j) / a_ii`.
/// With `omega = 1` this reduces to a Gauss-Seidel sweep, operation for
/// operation.
pub fn sor_forward<S: Scalar>(
    a: &CsrMatrix<S>,
    diag: &[S],
    omega: f64,
    b: &[S],
    x: &mut [S],
) {
    let om = S::from_f64(omega);
    let rest = S::from_f64(1.0 - omega);
    for i in 0..a.nrows() {
        let mut acc = b[i];
        for k in a.row_ptr()[i]..a.row_ptr()[i + 1] {
            let j = a.col_idx()[k];
            if j != i {
                acc -= a.values()[k] * x[j];
            }
        }
        let update = om * acc / diag[i];
        x[i] = if omega == 1.0 { update } else { rest * x[i] + update };
    }
}

/// One backward SOR sweep (descending row order).
pub fn sor_backward<S: Scalar>(
    a: &CsrMatrix<S>,
    diag: &[S],
    omega: f64,
    b: &[S],
    x: &mut [S],
) {
    let om = S::from_f64(omega);
    let rest = S::from_f64(1.0 - omega);
    for i in (0..a.nrows()).rev() {
        let mut acc = b[i];
        for k in a.row_ptr()[i]..a.row_ptr()[i + 1] {
            let j = a.col_idx()[k];
            if j != i {
                acc -= a.values()[k] * x[j];
            }
        }
        let update = om * acc / diag[i];
        x[i] = if omega == 1.0 { update } else { rest * x[i] + update };
    }
}

struct Level<S> {
    matrix: CsrMatrix<S>,
    diag: Vec<S>,
}

/// Geometric multigrid plan over a nested matrix hierarchy.
pub struct MultigridPlan<S> {
    levels: Vec<Level<S>>,
    prolong: Vec<CsrMatrix<S>>,
    restrict: Vec<CsrMatrix<S>>,
    coarse_lu: LuFactors<S>,
    params: MgParams,
}

impl<S: Scalar> MultigridPlan<S> {
    /// Build a plan from per-level matrices (coarsest first) and the
    /// prolongations `prolong[i]: level i -> level i+1`.
    pub fn new(
        matrices: Vec<CsrMatrix<S>>,
        prolong: Vec<CsrMatrix<S>>,
        params: MgParams,
    ) -> Result<Self> {
        if matrices.len() < 2 {
            return Err(Error::config(
                "multigrid needs at least two levels; use a direct solve instead",
            ));
        }
        if prolong.len() + 1 != matrices.len() {
            return Err(Error::usage(format!(
                "expected {} prolongations for {} levels, got {}",
                matrices.len() - 1,
                matrices.len(),
                prolong.len()
            )));
        }
        if matrices[0].nrows() > 2000 {
            return Err(Error::config(format!(
                "coarsest level dimension {} exceeds the dense-solve guard of 2000",
                matrices[0].nrows()
            )));
        }
        for (i, m) in matrices.iter().enumerate() {
            if m.nrows() != m.ncols() {
                return Err(Error::usage(format!("level {i} matrix is not square")));
            }
        }
        for (i, p) in prolong.iter().enumerate() {
            if p.ncols() != matrices[i].nrows() || p.nrows() != matrices[i + 1].nrows() {
                return Err(Error::usage(format!(
                    "prolongation {i} shape {}x{} does not chain levels {} -> {}",
                    p.nrows(),
                    p.ncols(),
                    matrices[i].nrows(),
                    matrices[i + 1].nrows()
                )));
            }
        }
        if params.cycles == 0 {
            return Err(Error::config("cycle count must be positive"));
        }
        let coarse_lu = DenseMatrix::from_csr(&matrices[0]).lu().map_err(|e| {
            Error::numerical(format!("coarsest-level factorization failed: {e}"))
        })?;
        let restrict = prolong.iter().map(|p| p.transpose()).collect();
        let mut levels = Vec::with_capacity(matrices.len());
        for (i, m) in matrices.into_iter().enumerate() {
            let diag = m.diagonal();
            if diag.iter().any(|d| d.abs() == 0.0) {
                return Err(Error::numerical(format!(
                    "zero diagonal entry at level {i}; SOR smoothing is undefined"
                )));
            }
            levels.push(Level { matrix: m, diag });
        }
        Ok(MultigridPlan {
            levels,
            prolong,
            restrict,
            coarse_lu,
            params,
        })
    }

    /// Dimension on the finest level.
    pub fn dim(&self) -> usize {
        self.levels.last().unwrap().matrix.nrows()
    }

    /// Number of levels.
    pub fn level_count(&self) -> usize {
        self.levels.len()
    }

    fn vcycle(&self, level: usize, b: &[S], x: &mut [S]) {
        if level == 0 {
            // Exact coarse solve (incoming x is always the zero vector for
            // recursive calls; the top level never has index 0).
            x.copy_from_slice(b);
            self.coarse_lu.solve_in_place(x);
            return;
        }
        let lev = &self.levels[level];
        for _ in 0..self.params.pre_sweeps {
            sor_forward(&lev.matrix, &lev.diag, self.params.omega, b, x);
        }
        let mut r = vec![S::zero(); b.len()];
        lev.matrix.mul_vec(x, &mut r);
        for i in 0..r.len() {
            r[i] = b[i] - r[i];
        }
        let rc = self.restrict[level - 1].apply(&r);
        let mut ec = vec![S::zero(); rc.len()];
        self.vcycle(level - 1, &rc, &mut ec);
        self.prolong[level - 1].mul_vec_add(S::one(), &ec, x);
        for _ in 0..self.params.post_sweeps {
            sor_backward(&lev.matrix, &lev.diag, self.params.omega, b, x);
        }
    }

    /// Run the configured number of V-cycles from a zero initial guess.
    pub fn apply(&self, b: &[S], x: &mut [S]) {
        debug_assert_eq!(b.len(), self.dim());
        debug_assert_eq!(x.len(), self.dim());
        x.iter_mut().for_each(|v| *v = S::zero());
        let top = self.levels.len() - 1;
        for _ in 0..self.params.cycles {
            self.vcycle(top, b, x);
        }
    }

    /// Allocating variant of [`MultigridPlan::apply`].
    pub fn solve(&self, b: &[S]) -> Vec<S> {
        let mut x = vec![S::zero(); self.dim()];
        self.apply(b, &mut x);
        x
    }
}

/// Approximate elliptic solve: multigrid when a hierarchy is available,
/// dense LU when the problem lives on a single (coarse) level.
pub enum EllipticSolve<S> {
    /// Dense factorization, exact solve.
    Direct(LuFactors<S>),
    /// Fixed number of V-cycles.
    Multigrid(MultigridPlan<S>),
}

impl<S: Scalar> EllipticSolve<S> {
    /// Build from a matrix hierarchy; a single level yields a direct solve.
    pub fn from_hierarchy(
        matrices: Vec<CsrMatrix<S>>,
        prolong: Vec<CsrMatrix<S>>,
        params: MgParams,
    ) -> Result<Self> {
        if matrices.len() == 1 {
            if matrices[0].nrows() > 2000 {
                return Err(Error::config(
                    "single-level solve exceeds the dense-solve guard of 2000",
                ));
            }
            let lu = DenseMatrix::from_csr(&matrices[0]).lu()?;
            Ok(EllipticSolve::Direct(lu))
        } else {
            Ok(EllipticSolve::Multigrid(MultigridPlan::new(
                matrices, prolong, params,
            )?))
        }
    }

    /// Operator dimension.
    pub fn dim(&self) -> usize {
        match self {
            EllipticSolve::Direct(lu) => lu.dim(),
            EllipticSolve::Multigrid(mg) => mg.dim(),
        }
    }

    /// Apply the approximate inverse.
    pub fn apply(&self, b: &[S], x: &mut [S]) {
        match self {
            EllipticSolve::Direct(lu) => {
                x.copy_from_slice(b);
                lu.solve_in_place(x);
            }
            EllipticSolve::Multigrid(mg) => mg.apply(b, x),
        }
    }

    /// Allocating variant of [`EllipticSolve::apply`].
    pub fn solve(&self, b: &[S]) -> Vec<S> {
        let mut x = vec![S::zero(); self.dim()];
        self.apply(b, &mut x);
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::Assembly;
    use crate::scalar::norm2;
    use num_complex::Complex64;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn pressure_stiffness_plan(level: u32, params: MgParams) -> MultigridPlan<f64> {
        let asm = Assembly::new(level, None).unwrap();
        let mats: Vec<_> = asm.levels.iter().map(|l| l.stiff_p.clone()).collect();
        MultigridPlan::new(mats, asm.prolong_p.clone(), params).unwrap()
    }

    #[test]
    fn zero_input_gives_zero_output() {
        let plan = pressure_stiffness_plan(2, MgParams::default());
        let out = plan.solve(&vec![0.0; plan.dim()]);
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn pressure_stiffness_level3_reduction_within_envelope() {
        let plan = pressure_stiffness_plan(3, MgParams::default());
        let asm = Assembly::new(3, None).unwrap();
        let dense = crate::dense::DenseMatrix::from_csr(&asm.levels[2].stiff_p);
        let mut rng = StdRng::seed_from_u64(7);
        let mut worst = 0.0f64;
        for _ in 0..5 {
            let b: Vec<f64> = (0..plan.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let exact = dense.solve(&b).unwrap();
            let approx = plan.solve(&b);
            let diff: Vec<f64> = exact.iter().zip(&approx).map(|(a, b)| a - b).collect();
            let rel = norm2(&diff) / norm2(&exact);
            worst = worst.max(rel);
        }
        println!("pressure stiffness level-3 four-cycle error: {worst:.3e}");
        assert!(worst <= 0.2, "measured error {worst:.3e}");
    }

    #[test]
    fn vcycle_application_is_linear() {
        let plan = pressure_stiffness_plan(2, MgParams::default());
        let n = plan.dim();
        let mut rng = StdRng::seed_from_u64(3);
        let r1: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let r2: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let alpha = 0.731;
        let combo: Vec<f64> = r1.iter().zip(&r2).map(|(a, b)| alpha * a + b).collect();
        let lhs = plan.solve(&combo);
        let x1 = plan.solve(&r1);
        let x2 = plan.solve(&r2);
        let rhs: Vec<f64> = x1.iter().zip(&x2).map(|(a, b)| alpha * a + b).collect();
        let diff: Vec<f64> = lhs.iter().zip(&rhs).map(|(a, b)| a - b).collect();
        assert!(norm2(&diff) <= 1e-12 * norm2(&lhs).max(1.0));
    }

    #[test]
    fn sor_with_unit_relaxation_is_gauss_seidel() {
        let asm = Assembly::new(2, None).unwrap();
        let a = &asm.levels[1].stiff_p;
        let diag = a.diagonal();
        let b: Vec<f64> = (0..a.nrows()).map(|i| ((i * 13 % 7) as f64) - 3.0).collect();
        let mut x_sor = vec![0.1; a.nrows()];
        sor_forward(a, &diag, 1.0, &b, &mut x_sor);
        // Hand-rolled Gauss-Seidel: x_i = (b_i - sum_{j<i} a_ij x_j^new
        //                                  - sum_{j>i} a_ij x_j^old) / a_ii
        let mut x_gs = vec![0.1; a.nrows()];
        for i in 0..a.nrows() {
            let mut acc = b[i];
            for k in a.row_ptr()[i]..a.row_ptr()[i + 1] {
                let j = a.col_idx()[k];
                if j != i {
                    acc -= a.values()[k] * x_gs[j];
                }
            }
            x_gs[i] = acc / diag[i];
        }
        for (a1, a2) in x_sor.iter().zip(x_gs.iter()) {
            assert_eq!(a1, a2);
        }
    }

    #[test]
    fn complex_shifted_operator_contracts_like_real_one() {
        // Shifted mass-plus-stiffness with a real shift d = 2, once as a
        // real plan and once promoted to complex storage: contractions must
        // agree within a factor of two. A genuinely complex shift 1 + i
        // must still contract below one.
        let asm = Assembly::new(3, None).unwrap();
        let tau = 0.5;
        let beta = 1e-3;
        let nu = 1e-2;
        let shift = 2.0 + tau / beta.sqrt();
        let mats_r: Vec<_> = asm
            .levels
            .iter()
            .map(|l| l.mass_s.add_scaled(shift, &l.stiff_s, tau * nu))
            .collect();
        let plan_r = MultigridPlan::new(mats_r.clone(), asm.prolong_s.clone(), MgParams::default()).unwrap();
        let mats_c: Vec<_> = mats_r.iter().map(|m| m.to_complex()).collect();
        let prolong_c: Vec<_> = asm.prolong_s.iter().map(|p| p.to_complex()).collect();
        let plan_c = MultigridPlan::new(mats_c, prolong_c.clone(), MgParams::default()).unwrap();

        let dense_r = crate::dense::DenseMatrix::from_csr(&plan_r_matrix(&asm, shift, tau, nu));
        let mut rng = StdRng::seed_from_u64(11);
        let b: Vec<f64> = (0..plan_r.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let exact = dense_r.solve(&b).unwrap();
        let xr = plan_r.solve(&b);
        let err_r = {
            let d: Vec<f64> = exact.iter().zip(&xr).map(|(a, b)| a - b).collect();
            norm2(&d) / norm2(&exact)
        };
        let bc = crate::scalar::promote(&b);
        let xc = plan_c.solve(&bc);
        let err_c = {
            let d: Vec<f64> = exact
                .iter()
                .zip(&xc)
                .map(|(a, z)| (a - z.re).hypot(z.im))
                .collect();
            norm2(&d) / norm2(&exact)
        };
        println!("real-shift errors: real plan {err_r:.3e}, complex plan {err_c:.3e}");
        assert!(err_c <= 2.0 * err_r.max(1e-14));

        // Complex shift 1 + i.
        let d_complex = Complex64::new(1.0, 1.0) + Complex64::new(tau / beta.sqrt(), 0.0);
        let mats_cc: Vec<_> = asm
            .levels
            .iter()
            .map(|l| {
                l.mass_s
                    .to_complex()
                    .add_scaled(d_complex, &l.stiff_s.to_complex(), Complex64::new(tau * nu, 0.0))
            })
            .collect();
        let dense_cc = crate::dense::DenseMatrix::from_csr(&mats_cc.last().unwrap().clone());
        let plan_cc = MultigridPlan::new(mats_cc, prolong_c, MgParams::default()).unwrap();
        let bcc: Vec<Complex64> = (0..plan_cc.dim())
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let exact_c = dense_cc.solve(&bcc).unwrap();
        let xcc = plan_cc.solve(&bcc);
        let dnum: Vec<Complex64> = exact_c.iter().zip(&xcc).map(|(a, b)| a - b).collect();
        let err_cc = norm2(&dnum) / norm2(&exact_c);
        println!("complex-shift error after 4 cycles: {err_cc:.3e}");
        assert!(err_cc < 1.0);
    }

    fn plan_r_matrix(asm: &Assembly, shift: f64, tau: f64, nu: f64) -> crate::sparse::CsrMatrix<f64> {
        asm.levels
            .last()
            .unwrap()
            .mass_s
            .add_scaled(shift, &asm.levels.last().unwrap().stiff_s, tau * nu)
    }

    #[test]
    fn rejects_single_level_and_oversized_coarse() {
        let asm = Assembly::new(2, None).unwrap();
        let one = vec![asm.levels[1].stiff_p.clone()];
        assert!(MultigridPlan::new(one, vec![], MgParams::default()).is_err());
        // EllipticSolve falls back to a direct factorization instead.
        let es = EllipticSolve::from_hierarchy(
            vec![asm.levels[1].stiff_p.clone()],
            vec![],
            MgParams::default(),
        )
        .unwrap();
        let b: Vec<f64> = (0..es.dim()).map(|i| (i as f64).cos()).collect();
        let x = es.solve(&b);
        let back = asm.levels[1].stiff_p.apply(&x);
        let d: Vec<f64> = back.iter().zip(&b).map(|(a, c)| a - c).collect();
        assert!(norm2(&d) <= 1e-10 * norm2(&b));
    }
}
