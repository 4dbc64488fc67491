//! Mixed-element assembly on the uniform quadrilateral grids: biquadratic
//! velocity / bilinear pressure operators, load vectors, boundary traces,
//! and the nodal interpolation transfers between hierarchy levels.
//!
//! All element integrals use the tensor 3x3 Gauss rule, which integrates
//! every polynomial integrand appearing here exactly. The convection form
//! is assembled in its skew-symmetrized variant
//! `n(w; u, v) = 0.5 * [(w . grad u, v) - (w . grad v, u)]`,
//! which coincides with the plain form for divergence-free wind fields that
//! vanish on the boundary and guarantees an exactly skew-symmetric matrix
//! regardless of quadrature.
//!
//! Boundary handling: velocity matrices are reduced to interior nodes with
//! the interior-by-boundary coupling blocks retained for right-hand-side
//! lifting; pressure matrices drop the single pinned node (row and column).

use crate::error::Result;
use crate::mesh::{Grid, MeshHierarchy};
use crate::sparse::{CooBuilder, CsrMatrix};

/// 3-point Gauss abscissae on `[-1, 1]`.
pub const GAUSS_PTS: [f64; 3] = [-0.774_596_669_241_483_4, 0.0, 0.774_596_669_241_483_4];
/// 3-point Gauss weights on `[-1, 1]`.
pub const GAUSS_WTS: [f64; 3] = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];

/// Wind field signature used by the convection assembly.
pub type WindFn = dyn Fn(f64, f64) -> [f64; 2] + Send + Sync;

#[inline]
fn q2_shape(xi: f64) -> [f64; 3] {
    [0.5 * xi * (xi - 1.0), 1.0 - xi * xi, 0.5 * xi * (xi + 1.0)]
}

#[inline]
fn q2_dshape(xi: f64) -> [f64; 3] {
    [xi - 0.5, -2.0 * xi, xi + 0.5]
}

#[inline]
fn q1_shape(xi: f64) -> [f64; 2] {
    [0.5 * (1.0 - xi), 0.5 * (1.0 + xi)]
}

#[inline]
fn q1_dshape() -> [f64; 2] {
    [-0.5, 0.5]
}

/// Full-grid scalar biquadratic operators `(mass, stiffness, convection)`.
///
/// The convection matrix is zero when `wind` is `None`.
pub fn assemble_q2_scalar_full(
    grid: &Grid,
    wind: Option<&WindFn>,
) -> (CsrMatrix<f64>, CsrMatrix<f64>, CsrMatrix<f64>) {
    let n = grid.q2_node_count();
    let m = grid.cells_per_side();
    let h = grid.h();
    let det_j = h * h / 4.0;
    let inv_j = 2.0 / h;
    let mut mb = CooBuilder::new(n, n);
    let mut kb = CooBuilder::new(n, n);
    let mut nb = CooBuilder::new(n, n);
    for cy in 0..m {
        for cx in 0..m {
            let nodes = grid.q2_cell_nodes(cx, cy);
            let (x0, y0) = grid.cell_origin(cx, cy);
            let mut me = [[0.0f64; 9]; 9];
            let mut ke = [[0.0f64; 9]; 9];
            let mut ne = [[0.0f64; 9]; 9];
            for (qx, &gx) in GAUSS_PTS.iter().enumerate() {
                for (qy, &gy) in GAUSS_PTS.iter().enumerate() {
                    let w_q = GAUSS_WTS[qx] * GAUSS_WTS[qy] * det_j;
                    let sx = q2_shape(gx);
                    let sy = q2_shape(gy);
                    let dx = q2_dshape(gx);
                    let dy = q2_dshape(gy);
                    let mut phi = [0.0f64; 9];
                    let mut gphi = [[0.0f64; 2]; 9];
                    for b in 0..3 {
                        for a in 0..3 {
                            let l = b * 3 + a;
                            phi[l] = sx[a] * sy[b];
                            gphi[l] = [inv_j * dx[a] * sy[b], inv_j * sx[a] * dy[b]];
                        }
                    }
                    let wvec = wind.map(|f| {
                        let px = x0 + 0.5 * h * (gx + 1.0);
                        let py = y0 + 0.5 * h * (gy + 1.0);
                        f(px, py)
                    });
                    for i in 0..9 {
                        for j in 0..9 {
                            me[i][j] += w_q * phi[i] * phi[j];
                            ke[i][j] +=
                                w_q * (gphi[i][0] * gphi[j][0] + gphi[i][1] * gphi[j][1]);
                            if let Some(wv) = wvec {
                                let adv_j = wv[0] * gphi[j][0] + wv[1] * gphi[j][1];
                                let adv_i = wv[0] * gphi[i][0] + wv[1] * gphi[i][1];
                                ne[i][j] += 0.5 * w_q * (phi[i] * adv_j - phi[j] * adv_i);
                            }
                        }
                    }
                }
            }
            for i in 0..9 {
                for j in 0..9 {
                    mb.push(nodes[i], nodes[j], me[i][j]);
                    kb.push(nodes[i], nodes[j], ke[i][j]);
                    if wind.is_some() {
                        nb.push(nodes[i], nodes[j], ne[i][j]);
                    }
                }
            }
        }
    }
    (mb.finalize(), kb.finalize(), nb.finalize())
}

/// Full-grid scalar bilinear operators `(mass, stiffness, convection)`.
pub fn assemble_q1_scalar_full(
    grid: &Grid,
    wind: Option<&WindFn>,
) -> (CsrMatrix<f64>, CsrMatrix<f64>, CsrMatrix<f64>) {
    let n = grid.q1_node_count();
    let m = grid.cells_per_side();
    let h = grid.h();
    let det_j = h * h / 4.0;
    let inv_j = 2.0 / h;
    let mut mb = CooBuilder::new(n, n);
    let mut kb = CooBuilder::new(n, n);
    let mut nb = CooBuilder::new(n, n);
    for cy in 0..m {
        for cx in 0..m {
            let nodes = grid.q1_cell_nodes(cx, cy);
            let (x0, y0) = grid.cell_origin(cx, cy);
            let mut me = [[0.0f64; 4]; 4];
            let mut ke = [[0.0f64; 4]; 4];
            let mut ne = [[0.0f64; 4]; 4];
            for (qx, &gx) in GAUSS_PTS.iter().enumerate() {
                for (qy, &gy) in GAUSS_PTS.iter().enumerate() {
                    let w_q = GAUSS_WTS[qx] * GAUSS_WTS[qy] * det_j;
                    let sx = q1_shape(gx);
                    let sy = q1_shape(gy);
                    let dx = q1_dshape();
                    let dy = q1_dshape();
                    let mut phi = [0.0f64; 4];
                    let mut gphi = [[0.0f64; 2]; 4];
                    for b in 0..2 {
                        for a in 0..2 {
                            let l = b * 2 + a;
                            phi[l] = sx[a] * sy[b];
                            gphi[l] = [inv_j * dx[a] * sy[b], inv_j * sx[a] * dy[b]];
                        }
                    }
                    let wvec = wind.map(|f| {
                        let px = x0 + 0.5 * h * (gx + 1.0);
                        let py = y0 + 0.5 * h * (gy + 1.0);
                        f(px, py)
                    });
                    for i in 0..4 {
                        for j in 0..4 {
                            me[i][j] += w_q * phi[i] * phi[j];
                            ke[i][j] +=
                                w_q * (gphi[i][0] * gphi[j][0] + gphi[i][1] * gphi[j][1]);
                            if let Some(wv) = wvec {
                                let adv_j = wv[0] * gphi[j][0] + wv[1] * gphi[j][1];
                                let adv_i = wv[0] * gphi[i][0] + wv[1] * gphi[i][1];
                                ne[i][j] += 0.5 * w_q * (phi[i] * adv_j - phi[j] * adv_i);
                            }
                        }
                    }
                }
            }
            for i in 0..4 {
                for j in 0..4 {
                    mb.push(nodes[i], nodes[j], me[i][j]);
                    kb.push(nodes[i], nodes[j], ke[i][j]);
                    if wind.is_some() {
                        nb.push(nodes[i], nodes[j], ne[i][j]);
                    }
                }
            }
        }
    }
    (mb.finalize(), kb.finalize(), nb.finalize())
}

/// Full-grid negative-divergence coupling `(bx, by)`, each of shape
/// bilinear-nodes by biquadratic-nodes: `bx[q, j] = -(psi_q, d phi_j / dx1)`.
pub fn assemble_divergence_full(grid: &Grid) -> (CsrMatrix<f64>, CsrMatrix<f64>) {
    let np = grid.q1_node_count();
    let nv = grid.q2_node_count();
    let m = grid.cells_per_side();
    let h = grid.h();
    let det_j = h * h / 4.0;
    let inv_j = 2.0 / h;
    let mut bxb = CooBuilder::new(np, nv);
    let mut byb = CooBuilder::new(np, nv);
    for cy in 0..m {
        for cx in 0..m {
            let vnodes = grid.q2_cell_nodes(cx, cy);
            let pnodes = grid.q1_cell_nodes(cx, cy);
            let mut bxe = [[0.0f64; 9]; 4];
            let mut bye = [[0.0f64; 9]; 4];
            for (qx, &gx) in GAUSS_PTS.iter().enumerate() {
                for (qy, &gy) in GAUSS_PTS.iter().enumerate() {
                    let w_q = GAUSS_WTS[qx] * GAUSS_WTS[qy] * det_j;
                    let sx2 = q2_shape(gx);
                    let sy2 = q2_shape(gy);
                    let dx2 = q2_dshape(gx);
                    let dy2 = q2_dshape(gy);
                    let sx1 = q1_shape(gx);
                    let sy1 = q1_shape(gy);
                    for b in 0..2 {
                        for a in 0..2 {
                            let q = b * 2 + a;
                            let psi = sx1[a] * sy1[b];
                            for d in 0..3 {
                                for c in 0..3 {
                                    let j = d * 3 + c;
                                    bxe[q][j] -= w_q * psi * inv_j * dx2[c] * sy2[d];
                                    bye[q][j] -= w_q * psi * inv_j * sx2[c] * dy2[d];
                                }
                            }
                        }
                    }
                }
            }
            for q in 0..4 {
                for j in 0..9 {
                    bxb.push(pnodes[q], vnodes[j], bxe[q][j]);
                    byb.push(pnodes[q], vnodes[j], bye[q][j]);
                }
            }
        }
    }
    (bxb.finalize(), byb.finalize())
}

/// Load vector of a scalar field against the biquadratic basis (full grid).
pub fn q2_load_full(grid: &Grid, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    let mut load = vec![0.0f64; grid.q2_node_count()];
    let m = grid.cells_per_side();
    let h = grid.h();
    let det_j = h * h / 4.0;
    for cy in 0..m {
        for cx in 0..m {
            let nodes = grid.q2_cell_nodes(cx, cy);
            let (x0, y0) = grid.cell_origin(cx, cy);
            for (qx, &gx) in GAUSS_PTS.iter().enumerate() {
                for (qy, &gy) in GAUSS_PTS.iter().enumerate() {
                    let w_q = GAUSS_WTS[qx] * GAUSS_WTS[qy] * det_j;
                    let px = x0 + 0.5 * h * (gx + 1.0);
                    let py = y0 + 0.5 * h * (gy + 1.0);
                    let fv = f(px, py);
                    let sx = q2_shape(gx);
                    let sy = q2_shape(gy);
                    for b in 0..3 {
                        for a in 0..3 {
                            load[nodes[b * 3 + a]] += w_q * fv * sx[a] * sy[b];
                        }
                    }
                }
            }
        }
    }
    load
}

/// Interior restriction of a full-grid biquadratic vector.
pub fn q2_restrict_interior_vec(grid: &Grid, full: &[f64]) -> Vec<f64> {
    grid.q2_interior_nodes().iter().map(|&n| full[n]).collect()
}

/// Boundary restriction of a full-grid biquadratic vector.
pub fn q2_restrict_boundary_vec(grid: &Grid, full: &[f64]) -> Vec<f64> {
    grid.q2_boundary_nodes().iter().map(|&n| full[n]).collect()
}

/// Nodal samples of a scalar function on the full biquadratic grid.
pub fn q2_nodal_component(grid: &Grid, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    (0..grid.q2_node_count())
        .map(|n| {
            let (x, y) = grid.q2_coord(n);
            f(x, y)
        })
        .collect()
}

/// Split a full-grid matrix into interior-by-interior and
/// interior-by-boundary blocks.
pub fn split_interior_boundary(
    grid: &Grid,
    full: &CsrMatrix<f64>,
) -> (CsrMatrix<f64>, CsrMatrix<f64>) {
    let interior = grid.q2_interior_nodes();
    let boundary = grid.q2_boundary_nodes();
    (
        full.select(interior, interior),
        full.select(interior, boundary),
    )
}

/// Drop the pinned pressure row and column.
pub fn pin_pressure(full: &CsrMatrix<f64>) -> CsrMatrix<f64> {
    let keep: Vec<usize> = (1..full.nrows()).collect();
    full.select(&keep, &keep)
}

/// Split a full divergence block into pinned-by-interior and
/// pinned-by-boundary velocity columns.
pub fn split_divergence(
    grid: &Grid,
    full: &CsrMatrix<f64>,
) -> (CsrMatrix<f64>, CsrMatrix<f64>) {
    let rows: Vec<usize> = (1..full.nrows()).collect();
    (
        full.select(&rows, grid.q2_interior_nodes()),
        full.select(&rows, grid.q2_boundary_nodes()),
    )
}

fn locate_cell(m: usize, h: f64, x: f64) -> (usize, f64) {
    // Cell index along one axis and local coordinate in [-1, 1].
    let t = (x + 1.0) / h;
    let mut c = t.floor() as isize;
    if c < 0 {
        c = 0;
    }
    if c as usize >= m {
        c = m as isize - 1;
    }
    let local = 2.0 * (t - c as f64) - 1.0;
    (c as usize, local)
}

/// Nodal-interpolation prolongation between full biquadratic grids.
pub fn q2_prolongation_full(coarse: &Grid, fine: &Grid) -> CsrMatrix<f64> {
    assert_eq!(coarse.level() + 1, fine.level());
    let mc = coarse.cells_per_side();
    let hc = coarse.h();
    let mut b = CooBuilder::new(fine.q2_node_count(), coarse.q2_node_count());
    for fnode in 0..fine.q2_node_count() {
        let (x, y) = fine.q2_coord(fnode);
        let (cx, xi) = locate_cell(mc, hc, x);
        let (cy, eta) = locate_cell(mc, hc, y);
        let sx = q2_shape(xi);
        let sy = q2_shape(eta);
        let nodes = coarse.q2_cell_nodes(cx, cy);
        for d in 0..3 {
            for c in 0..3 {
                let w = sx[c] * sy[d];
                if w != 0.0 {
                    b.push(fnode, nodes[d * 3 + c], w);
                }
            }
        }
    }
    b.finalize()
}

/// Nodal-interpolation prolongation between full bilinear grids.
pub fn q1_prolongation_full(coarse: &Grid, fine: &Grid) -> CsrMatrix<f64> {
    assert_eq!(coarse.level() + 1, fine.level());
    let mc = coarse.cells_per_side();
    let hc = coarse.h();
    let mut b = CooBuilder::new(fine.q1_node_count(), coarse.q1_node_count());
    for fnode in 0..fine.q1_node_count() {
        let (x, y) = fine.q1_coord(fnode);
        let (cx, xi) = locate_cell(mc, hc, x);
        let (cy, eta) = locate_cell(mc, hc, y);
        let sx = q1_shape(xi);
        let sy = q1_shape(eta);
        let nodes = coarse.q1_cell_nodes(cx, cy);
        for d in 0..2 {
            for c in 0..2 {
                let w = sx[c] * sy[d];
                if w != 0.0 {
                    b.push(fnode, nodes[d * 2 + c], w);
                }
            }
        }
    }
    b.finalize()
}

/// Interior-to-interior reduction of the biquadratic prolongation.
pub fn q2_prolongation_interior(coarse: &Grid, fine: &Grid) -> CsrMatrix<f64> {
    q2_prolongation_full(coarse, fine)
        .select(fine.q2_interior_nodes(), coarse.q2_interior_nodes())
}

/// Pinned-to-pinned reduction of the bilinear prolongation.
pub fn q1_prolongation_pinned(coarse: &Grid, fine: &Grid) -> CsrMatrix<f64> {
    let full = q1_prolongation_full(coarse, fine);
    let rows: Vec<usize> = (1..full.nrows()).collect();
    let cols: Vec<usize> = (1..full.ncols()).collect();
    full.select(&rows, &cols)
}

/// Reduced scalar operators for one hierarchy level.
#[derive(Debug, Clone)]
pub struct LevelOperators {
    /// Interior scalar velocity dimension.
    pub ns: usize,
    /// Reduced pressure dimension.
    pub np: usize,
    /// Interior biquadratic scalar mass.
    pub mass_s: CsrMatrix<f64>,
    /// Interior biquadratic scalar stiffness.
    pub stiff_s: CsrMatrix<f64>,
    /// Interior biquadratic scalar convection (skew-symmetric).
    pub conv_s: CsrMatrix<f64>,
    /// Pinned bilinear mass.
    pub mass_p: CsrMatrix<f64>,
    /// Pinned bilinear stiffness (assembled without boundary conditions).
    pub stiff_p: CsrMatrix<f64>,
    /// Pinned bilinear convection (skew-symmetric).
    pub conv_p: CsrMatrix<f64>,
}

/// Finest-level operators including the velocity-pressure coupling and the
/// boundary blocks needed to lift inhomogeneous velocity data.
#[derive(Debug, Clone)]
pub struct DiscreteOperators {
    /// Interior scalar velocity dimension (velocity space is twice this).
    pub ns: usize,
    /// Reduced pressure dimension.
    pub np: usize,
    /// Boundary scalar node count.
    pub nbnd: usize,
    /// Interior scalar mass / stiffness / convection.
    pub mass_s: CsrMatrix<f64>,
    /// Interior scalar stiffness.
    pub stiff_s: CsrMatrix<f64>,
    /// Interior scalar convection (skew-symmetric).
    pub conv_s: CsrMatrix<f64>,
    /// Negative-divergence blocks acting on the two velocity components.
    pub bx: CsrMatrix<f64>,
    /// Second-component divergence block.
    pub by: CsrMatrix<f64>,
    /// Transpose of `bx`, stored for fast gradient application.
    pub bx_t: CsrMatrix<f64>,
    /// Transpose of `by`.
    pub by_t: CsrMatrix<f64>,
    /// Interior-by-boundary mass coupling.
    pub mass_ib: CsrMatrix<f64>,
    /// Interior-by-boundary stiffness coupling.
    pub stiff_ib: CsrMatrix<f64>,
    /// Interior-by-boundary convection coupling.
    pub conv_ib: CsrMatrix<f64>,
    /// Pinned-pressure-by-boundary divergence couplings.
    pub bx_ib: CsrMatrix<f64>,
    /// Second-component boundary divergence coupling.
    pub by_ib: CsrMatrix<f64>,
    /// Pinned bilinear mass (duplicated from the finest level operators).
    pub mass_p: CsrMatrix<f64>,
    /// Pinned bilinear stiffness.
    pub stiff_p: CsrMatrix<f64>,
    /// Pinned bilinear convection.
    pub conv_p: CsrMatrix<f64>,
}

impl DiscreteOperators {
    /// Velocity space dimension.
    pub fn nv(&self) -> usize {
        2 * self.ns
    }

    /// Apply the two-component mass matrix.
    pub fn apply_mass_v(&self, x: &[f64], y: &mut [f64]) {
        let ns = self.ns;
        self.mass_s.mul_vec(&x[..ns], &mut y[..ns]);
        self.mass_s.mul_vec(&x[ns..], &mut y[ns..]);
    }

    /// Apply `nu * stiffness + convection` on both components.
    pub fn apply_l_v(&self, nu: f64, x: &[f64], y: &mut [f64]) {
        let ns = self.ns;
        for half in 0..2 {
            let xs = &x[half * ns..(half + 1) * ns];
            let ys = &mut y[half * ns..(half + 1) * ns];
            self.stiff_s.mul_vec(xs, ys);
            for v in ys.iter_mut() {
                *v *= nu;
            }
            self.conv_s.mul_vec_add(1.0, xs, ys);
        }
    }

    /// Apply the transpose of `nu * stiffness + convection`.
    pub fn apply_l_v_transpose(&self, nu: f64, x: &[f64], y: &mut [f64]) {
        let ns = self.ns;
        for half in 0..2 {
            let xs = &x[half * ns..(half + 1) * ns];
            let ys = &mut y[half * ns..(half + 1) * ns];
            self.stiff_s.mul_vec(xs, ys);
            for v in ys.iter_mut() {
                *v *= nu;
            }
            // Skew symmetry: the transpose of the convection block is its
            // negative.
            self.conv_s.mul_vec_add(-1.0, xs, ys);
        }
    }

    /// Apply the divergence block `B` to a two-component velocity vector.
    pub fn apply_div(&self, x: &[f64], y: &mut [f64]) {
        let ns = self.ns;
        self.bx.mul_vec(&x[..ns], y);
        self.by.mul_vec_add(1.0, &x[ns..], y);
    }

    /// Apply the gradient block `B^T` to a pressure vector.
    pub fn apply_grad(&self, x: &[f64], y: &mut [f64]) {
        let ns = self.ns;
        self.bx_t.mul_vec(x, &mut y[..ns]);
        self.by_t.mul_vec(x, &mut y[ns..]);
    }
}

/// Assembled operator stack: per-level reduced operators, transfers, and
/// the finest-level coupled system.
#[derive(Debug)]
pub struct Assembly {
    /// Grids, coarsest (level 1) to finest.
    pub hierarchy: MeshHierarchy,
    /// Reduced operators per level, aligned with the hierarchy.
    pub levels: Vec<LevelOperators>,
    /// Interior biquadratic prolongations; entry `i` maps level `i` to `i+1`.
    pub prolong_s: Vec<CsrMatrix<f64>>,
    /// Pinned bilinear prolongations.
    pub prolong_p: Vec<CsrMatrix<f64>>,
    /// Finest-level coupled operators.
    pub ops: DiscreteOperators,
}

impl Assembly {
    /// Assemble all levels `1..=level` for the given wind field.
    pub fn new(level: u32, wind: Option<&WindFn>) -> Result<Assembly> {
        let hierarchy = MeshHierarchy::new(1, level)?;
        let mut levels = Vec::with_capacity(hierarchy.len());
        for grid in hierarchy.grids() {
            let (m2, k2, n2) = assemble_q2_scalar_full(grid, wind);
            let (mass_s, _) = split_interior_boundary(grid, &m2);
            let (stiff_s, _) = split_interior_boundary(grid, &k2);
            let (conv_s, _) = split_interior_boundary(grid, &n2);
            let (m1, k1, n1) = assemble_q1_scalar_full(grid, wind);
            levels.push(LevelOperators {
                ns: grid.q2_interior_count(),
                np: grid.pressure_dofs(),
                mass_s,
                stiff_s,
                conv_s,
                mass_p: pin_pressure(&m1),
                stiff_p: pin_pressure(&k1),
                conv_p: pin_pressure(&n1),
            });
        }
        let mut prolong_s = Vec::new();
        let mut prolong_p = Vec::new();
        for i in 0..hierarchy.len() - 1 {
            prolong_s.push(q2_prolongation_interior(
                hierarchy.grid(i),
                hierarchy.grid(i + 1),
            ));
            prolong_p.push(q1_prolongation_pinned(
                hierarchy.grid(i),
                hierarchy.grid(i + 1),
            ));
        }
        let finest = hierarchy.finest();
        let (m2, k2, n2) = assemble_q2_scalar_full(finest, wind);
        let (mass_s, mass_ib) = split_interior_boundary(finest, &m2);
        let (stiff_s, stiff_ib) = split_interior_boundary(finest, &k2);
        let (conv_s, conv_ib) = split_interior_boundary(finest, &n2);
        let (bx_full, by_full) = assemble_divergence_full(finest);
        let (bx, bx_ib) = split_divergence(finest, &bx_full);
        let (by, by_ib) = split_divergence(finest, &by_full);
        let top = levels.last().expect("at least one level");
        let ops = DiscreteOperators {
            ns: finest.q2_interior_count(),
            np: finest.pressure_dofs(),
            nbnd: finest.q2_boundary_count(),
            mass_s: mass_s.clone(),
            stiff_s: stiff_s.clone(),
            conv_s: conv_s.clone(),
            bx_t: bx.transpose(),
            by_t: by.transpose(),
            bx,
            by,
            mass_ib,
            stiff_ib,
            conv_ib,
            bx_ib,
            by_ib,
            mass_p: top.mass_p.clone(),
            stiff_p: top.stiff_p.clone(),
            conv_p: top.conv_p.clone(),
        };
        Ok(Assembly {
            hierarchy,
            levels,
            prolong_s,
            prolong_p,
            ops,
        })
    }

    /// Finest grid.
    pub fn finest_grid(&self) -> &Grid {
        self.hierarchy.finest()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::{singular_values, DenseMatrix};

    #[test]
    fn mass_matrix_reproduces_domain_area() {
        for level in [1u32, 2] {
            let grid = Grid::new(level).unwrap();
            let (m2, _, _) = assemble_q2_scalar_full(&grid, None);
            let ones = vec![1.0; grid.q2_node_count()];
            let total: f64 = m2.apply(&ones).iter().sum();
            assert!((total - 4.0).abs() < 1e-12, "level {level}: {total}");
            let (m1, _, _) = assemble_q1_scalar_full(&grid, None);
            let ones = vec![1.0; grid.q1_node_count()];
            let total: f64 = m1.apply(&ones).iter().sum();
            assert!((total - 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn stiffness_annihilates_constants() {
        let grid = Grid::new(2).unwrap();
        let (_, k2, _) = assemble_q2_scalar_full(&grid, None);
        let ones = vec![1.0; grid.q2_node_count()];
        let r = k2.apply(&ones);
        assert!(r.iter().all(|v| v.abs() < 1e-12));
        let (_, k1, _) = assemble_q1_scalar_full(&grid, None);
        let ones = vec![1.0; grid.q1_node_count()];
        let r = k1.apply(&ones);
        assert!(r.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn corner_entries_match_hand_integrals() {
        // One-dimensional element integrals for the quadratic basis on a
        // cell of width h give mass (h/30)*diag-corner 4 and stiffness
        // (7/(3h)); the tensor-product corner entries follow.
        let grid = Grid::new(1).unwrap();
        let h = grid.h();
        let (m2, k2, _) = assemble_q2_scalar_full(&grid, None);
        let m_corner = (4.0 * h / 30.0) * (4.0 * h / 30.0);
        assert!((m2.get(0, 0) - m_corner).abs() < 1e-14);
        let k_corner = 2.0 * (7.0 / (3.0 * h)) * (4.0 * h / 30.0);
        assert!((k2.get(0, 0) - k_corner).abs() < 1e-14);
    }

    #[test]
    fn convection_is_exactly_skew_symmetric() {
        let wind = |x: f64, y: f64| [y, x * x - 0.3];
        let grid = Grid::new(2).unwrap();
        let (_, _, n2) = assemble_q2_scalar_full(&grid, Some(&wind));
        let sum = n2.add_scaled(1.0, &n2.transpose(), 1.0);
        assert!(sum.norm_inf() < 1e-12 * n2.norm_inf().max(1.0));
    }

    #[test]
    fn convection_matches_integral_oracle_for_constant_wind() {
        // With wind (1, 0), u = x^2, v = x (both inside the biquadratic
        // space), the skew form evaluates to
        // 0.5 * [(du/dx, v) - (dv/dx, u)] = 0.5 * (8/3 - 4/3) = 2/3.
        let wind = |_x: f64, _y: f64| [1.0, 0.0];
        let grid = Grid::new(2).unwrap();
        let (_, _, n2) = assemble_q2_scalar_full(&grid, Some(&wind));
        let u = q2_nodal_component(&grid, |x, _| x * x);
        let v = q2_nodal_component(&grid, |x, _| x);
        let nu = n2.apply(&u);
        let val: f64 = v.iter().zip(nu.iter()).map(|(a, b)| a * b).sum();
        assert!((val - 2.0 / 3.0).abs() < 1e-12, "{val}");
    }

    #[test]
    fn divergence_annihilates_divergence_free_polynomial() {
        let grid = Grid::new(2).unwrap();
        let (bx, by) = assemble_divergence_full(&grid);
        let vx = q2_nodal_component(&grid, |_, y| y);
        let vy = q2_nodal_component(&grid, |x, _| x);
        let mut r = bx.apply(&vx);
        by.mul_vec_add(1.0, &vy, &mut r);
        assert!(r.iter().all(|v| v.abs() < 1e-13));
    }

    #[test]
    fn divergence_matches_integral_oracle() {
        // v = (x, 0) has div = 1; rows of B sum against psi_q to the
        // negative of the basis integrals, so 1^T B v = -area.
        let grid = Grid::new(1).unwrap();
        let (bx, by) = assemble_divergence_full(&grid);
        let vx = q2_nodal_component(&grid, |x, _| x);
        let vy = vec![0.0; grid.q2_node_count()];
        let mut r = bx.apply(&vx);
        by.mul_vec_add(1.0, &vy, &mut r);
        let total: f64 = r.iter().sum();
        assert!((total + 4.0).abs() < 1e-12, "{total}");
    }

    #[test]
    fn reduced_divergence_has_full_rank() {
        for level in [1u32, 2] {
            let grid = Grid::new(level).unwrap();
            let (bx_full, by_full) = assemble_divergence_full(&grid);
            let (bx, _) = split_divergence(&grid, &bx_full);
            let (by, _) = split_divergence(&grid, &by_full);
            let np = grid.pressure_dofs();
            let nv = grid.velocity_dofs();
            let mut b = DenseMatrix::<f64>::zeros(np, nv);
            let dbx = DenseMatrix::from_csr(&bx);
            let dby = DenseMatrix::from_csr(&by);
            b.set_block(0, 0, &dbx);
            b.set_block(0, nv / 2, &dby);
            let s = singular_values(&b.to_complex()).unwrap();
            let smin = s.last().copied().unwrap();
            assert!(smin > 1e-10, "level {level}: smallest singular value {smin}");
        }
    }

    #[test]
    fn load_vector_integrates_polynomials_exactly() {
        let grid = Grid::new(2).unwrap();
        let load = q2_load_full(&grid, |x, y| x * x + y * y);
        let total: f64 = load.iter().sum();
        assert!((total - 8.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn prolongation_preserves_constants_and_nested_polynomials() {
        let coarse = Grid::new(1).unwrap();
        let fine = Grid::new(2).unwrap();
        let p2 = q2_prolongation_full(&coarse, &fine);
        let ones = vec![1.0; coarse.q2_node_count()];
        let up = p2.apply(&ones);
        assert!(up.iter().all(|v| (v - 1.0).abs() < 1e-14));

        let f = |x: f64, y: f64| x * x * y * y + x - y;
        let cs = q2_nodal_component(&coarse, f);
        let fs = q2_nodal_component(&fine, f);
        let up = p2.apply(&cs);
        for (a, b) in up.iter().zip(fs.iter()) {
            assert!((a - b).abs() < 1e-13);
        }

        let p1 = q1_prolongation_full(&coarse, &fine);
        let ones = vec![1.0; coarse.q1_node_count()];
        let up = p1.apply(&ones);
        assert!(up.iter().all(|v| (v - 1.0).abs() < 1e-14));
    }

    #[test]
    fn assembly_dimensions_are_consistent() {
        let asm = Assembly::new(2, None).unwrap();
        assert_eq!(asm.levels.len(), 2);
        assert_eq!(asm.ops.ns, 49);
        assert_eq!(asm.ops.np, 24);
        assert_eq!(asm.ops.nv(), 98);
        assert_eq!(asm.prolong_s.len(), 1);
        assert_eq!(asm.prolong_s[0].nrows(), 49);
        assert_eq!(asm.prolong_s[0].ncols(), 9);
        assert_eq!(asm.prolong_p[0].nrows(), 24);
        assert_eq!(asm.prolong_p[0].ncols(), 8);
        assert_eq!(asm.ops.bx.nrows(), 24);
        assert_eq!(asm.ops.bx.ncols(), 49);
        assert_eq!(asm.ops.mass_ib.ncols(), asm.ops.nbnd);
    }

    #[test]
    fn pinned_pressure_stiffness_is_positive_definite() {
        let grid = Grid::new(2).unwrap();
        let (_, k1, _) = assemble_q1_scalar_full(&grid, None);
        let kp = pin_pressure(&k1);
        let dk = DenseMatrix::from_csr(&kp).to_complex();
        let eigs = crate::dense::eigenvalues(&dk).unwrap();
        let min_re = eigs.iter().map(|z| z.re).fold(f64::INFINITY, f64::min);
        assert!(min_re > 1e-8, "smallest eigenvalue {min_re}");
    }
}
