//! The all-at-once optimality system: matrix-free application of the
//! space-time operator, right-hand-side construction from problem data,
//! and a dense assembly used as a desk-scale oracle.
//!
//! Unknowns live at the interior time points `1..n_t-1` for four fields:
//! state velocity `v`, state pressure `p`, adjoint velocity `l`, adjoint
//! pressure `m`. With `tau` the time step, `M` the velocity mass matrix,
//! `L = nu K + N` the discrete diffusion-convection operator, and `B` the
//! divergence, one application computes per time index `j` (missing
//! neighbors treated as zero):
//!
//! ```text
//! out_v[j] = tau M v[j] + M (l[j] - l[j+1]) + tau L^T l[j] + tau B^T m[j]
//! out_p[j] = tau B l[j]
//! out_l[j] = M (v[j] - v[j-1]) + tau L v[j] + tau B^T p[j] - (tau/beta) M l[j]
//! out_m[j] = tau B v[j]
//! ```

use crate::circulant::{BlockLayout, BlockVector, TimeGrid};
use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::fem::{
    self, Assembly, DiscreteOperators,
};
use crate::problem::ControlProblem;
use crate::scalar::axpy;
use crate::sparse::CsrMatrix;

/// Matrix-free all-at-once operator.
pub struct AllAtOnceOperator<'a> {
    ops: &'a DiscreteOperators,
    grid: TimeGrid,
    beta: f64,
    nu: f64,
}

impl<'a> AllAtOnceOperator<'a> {
    pub fn new(ops: &'a DiscreteOperators, grid: TimeGrid, beta: f64, nu: f64) -> Self {
        AllAtOnceOperator {
            ops,
            grid,
            beta,
            nu,
        }
    }

    /// Layout of compatible block vectors.
    pub fn layout(&self) -> BlockLayout {
        BlockLayout::new(self.grid.n_blocks(), self.ops.nv(), self.ops.np)
    }

    /// Total number of unknowns.
    pub fn dim(&self) -> usize {
        self.layout().len()
    }

    /// Apply the operator to a field-major slice.
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        let layout = self.layout();
        debug_assert_eq!(x.len(), layout.len());
        debug_assert_eq!(out.len(), layout.len());
        let tau = self.grid.tau();
        let nv = layout.nv;
        let np = layout.np;
        let nb = layout.nb;
        let mut tmp_v = vec![0.0; nv];
        let mut tmp_p = vec![0.0; np];
        let mut diff = vec![0.0; nv];
        for j in 0..nb {
            let v_j = &x[layout.v_offset(j)..layout.v_offset(j) + nv];
            let p_j = &x[layout.p_offset(j)..layout.p_offset(j) + np];
            let l_j = &x[layout.lam_offset(j)..layout.lam_offset(j) + nv];
            let m_j = &x[layout.mu_offset(j)..layout.mu_offset(j) + np];

            // out_v[j] = tau M v[j] + M (l[j] - l[j+1]) + tau L^T l[j]
            //            + tau B^T m[j]
            {
                let dst = &mut out[layout.v_offset(j)..layout.v_offset(j) + nv];
                self.ops.apply_mass_v(v_j, dst);
                for d in dst.iter_mut() {
                    *d *= tau;
                }
                diff.copy_from_slice(l_j);
                if j + 1 < nb {
                    let l_next = &x[layout.lam_offset(j + 1)..layout.lam_offset(j + 1) + nv];
                    for (d, ln) in diff.iter_mut().zip(l_next) {
                        *d -= ln;
                    }
                }
                self.ops.apply_mass_v(&diff, &mut tmp_v);
                axpy(1.0, &tmp_v, dst);
                self.ops.apply_l_v_transpose(self.nu, l_j, &mut tmp_v);
                axpy(tau, &tmp_v, dst);
                self.ops.apply_grad(m_j, &mut tmp_v);
                axpy(tau, &tmp_v, dst);
            }

            // out_p[j] = tau B l[j]
            {
                let dst = &mut out[layout.p_offset(j)..layout.p_offset(j) + np];
                self.ops.apply_div(l_j, dst);
                for d in dst.iter_mut() {
                    *d *= tau;
                }
            }

            // out_l[j] = M (v[j] - v[j-1]) + tau L v[j] + tau B^T p[j]
            //            - (tau/beta) M l[j]
            {
                let dst = &mut out[layout.lam_offset(j)..layout.lam_offset(j) + nv];
                diff.copy_from_slice(v_j);
                if j > 0 {
                    let v_prev = &x[layout.v_offset(j - 1)..layout.v_offset(j - 1) + nv];
                    for (d, vp) in diff.iter_mut().zip(v_prev) {
                        *d -= vp;
                    }
                }
                self.ops.apply_mass_v(&diff, dst);
                self.ops.apply_l_v(self.nu, v_j, &mut tmp_v);
                axpy(tau, &tmp_v, dst);
                self.ops.apply_grad(p_j, &mut tmp_v);
                axpy(tau, &tmp_v, dst);
                self.ops.apply_mass_v(l_j, &mut tmp_v);
                axpy(-tau / self.beta, &tmp_v, dst);
            }

            // out_m[j] = tau B v[j]
            {
                let dst = &mut out[layout.mu_offset(j)..layout.mu_offset(j) + np];
                self.ops.apply_div(v_j, &mut tmp_p);
                for (d, t) in dst.iter_mut().zip(&tmp_p) {
                    *d = tau * *t;
                }
            }
        }
    }

    /// Dense assembly of the same operator, for desk-scale verification.
    pub fn to_dense(&self) -> DenseMatrix<f64> {
        let n = self.dim();
        let mut cols = DenseMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        let mut col = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            self.apply(&e, &mut col);
            e[j] = 0.0;
            for i in 0..n {
                if col[i] != 0.0 {
                    cols[(i, j)] = col[i];
                }
            }
        }
        cols
    }
}

/// Boundary velocity values at one time level, sampled nodally.
fn boundary_values(
    assembly: &Assembly,
    h: &dyn Fn(f64, f64, f64) -> [f64; 2],
    t: f64,
) -> Vec<f64> {
    let grid = assembly.finest_grid();
    let nbnd = grid.q2_boundary_count();
    let mut vb = vec![0.0; 2 * nbnd];
    for (b, &node) in grid.q2_boundary_nodes().iter().enumerate() {
        let (x, y) = grid.q2_coord(node);
        let val = h(x, y, t);
        vb[b] = val[0];
        vb[nbnd + b] = val[1];
    }
    vb
}

/// Apply a scalar interior-by-boundary coupling block to both components.
fn apply_ib(
    block: &CsrMatrix<f64>,
    vb: &[f64],
    ns: usize,
    nbnd: usize,
    scale: f64,
    out: &mut [f64],
) {
    let mut tmp = vec![0.0; ns];
    block.mul_vec(&vb[..nbnd], &mut tmp);
    axpy(scale, &tmp, &mut out[..ns]);
    block.mul_vec(&vb[nbnd..], &mut tmp);
    axpy(scale, &tmp, &mut out[ns..]);
}

/// Build the all-at-once right-hand side from problem data: tracking loads
/// in the `v` rows, forcing loads plus Dirichlet lifting in the `l` rows,
/// divergence lifting in the `m` rows, and the initial state entering the
/// first time level.
pub fn build_rhs(problem: &ControlProblem, assembly: &Assembly) -> Result<BlockVector<f64>> {
    problem.validate()?;
    let grid = assembly.finest_grid();
    let ops = &assembly.ops;
    let ns = ops.ns;
    let nbnd = ops.nbnd;
    let tgrid = problem.grid;
    let tau = tgrid.tau();
    let nb = tgrid.n_blocks();
    let layout = BlockLayout::new(nb, ops.nv(), ops.np);
    let mut rhs = BlockVector::zeros(layout);

    // Initial velocity, nodally interpolated over the full grid.
    let v0x = fem::q2_nodal_component(grid, |x, y| (problem.v0)(x, y)[0]);
    let v0y = fem::q2_nodal_component(grid, |x, y| (problem.v0)(x, y)[1]);

    let mut vb_prev: Option<Vec<f64>> = None;
    for j in 0..nb {
        let t = tgrid.time_point(j);
        let vb = boundary_values(assembly, problem.h.as_ref(), t);

        // Tracking rows: tau * load(v_d) - tau * M_ib vb.
        {
            let loadx = fem::q2_load_full(grid, |x, y| (problem.v_d)(x, y, t)[0]);
            let loady = fem::q2_load_full(grid, |x, y| (problem.v_d)(x, y, t)[1]);
            let lx = fem::q2_restrict_interior_vec(grid, &loadx);
            let ly = fem::q2_restrict_interior_vec(grid, &loady);
            let dst = rhs.v_mut(j);
            axpy(tau, &lx, &mut dst[..ns]);
            axpy(tau, &ly, &mut dst[ns..]);
            apply_ib(&ops.mass_ib, &vb, ns, nbnd, -tau, dst);
        }

        // State rows: tau * load(f) - tau L_ib vb - M_ib vb + previous or
        // initial mass contribution.
        {
            let loadx = fem::q2_load_full(grid, |x, y| (problem.f)(x, y, t)[0]);
            let loady = fem::q2_load_full(grid, |x, y| (problem.f)(x, y, t)[1]);
            let lx = fem::q2_restrict_interior_vec(grid, &loadx);
            let ly = fem::q2_restrict_interior_vec(grid, &loady);
            let dst = rhs.lam_mut(j);
            axpy(tau, &lx, &mut dst[..ns]);
            axpy(tau, &ly, &mut dst[ns..]);
            apply_ib(&ops.stiff_ib, &vb, ns, nbnd, -tau * problem.nu, dst);
            apply_ib(&ops.conv_ib, &vb, ns, nbnd, -tau, dst);
            apply_ib(&ops.mass_ib, &vb, ns, nbnd, -1.0, dst);
            if j == 0 {
                // Full mass action on the initial state, interior rows:
                // M_ii v0_i + M_ib v0_b.
                let v0xi = fem::q2_restrict_interior_vec(grid, &v0x);
                let v0yi = fem::q2_restrict_interior_vec(grid, &v0y);
                let mut tmp = vec![0.0; ns];
                ops.mass_s.mul_vec(&v0xi, &mut tmp);
                axpy(1.0, &tmp, &mut dst[..ns]);
                ops.mass_s.mul_vec(&v0yi, &mut tmp);
                axpy(1.0, &tmp, &mut dst[ns..]);
                let mut vb0 = fem::q2_restrict_boundary_vec(grid, &v0x);
                vb0.extend(fem::q2_restrict_boundary_vec(grid, &v0y));
                apply_ib(&ops.mass_ib, &vb0, ns, nbnd, 1.0, dst);
            } else if let Some(prev) = &vb_prev {
                apply_ib(&ops.mass_ib, prev, ns, nbnd, 1.0, dst);
            }
        }

        // Divergence rows: -tau * B_ib vb.
        {
            let dst = rhs.mu_mut(j);
            let mut tmp = vec![0.0; ops.np];
            ops.bx_ib.mul_vec(&vb[..nbnd], &mut tmp);
            axpy(-tau, &tmp, dst);
            ops.by_ib.mul_vec(&vb[nbnd..], &mut tmp);
            axpy(-tau, &tmp, dst);
        }

        vb_prev = Some(vb);
    }

    if rhs.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input(
            "problem data produced non-finite right-hand-side entries".into(),
        ));
    }
    Ok(rhs)
}
