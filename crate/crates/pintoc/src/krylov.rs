//! Restarted GMRES and flexible GMRES over real or complex scalars,
//! matrix-free and right-preconditioned.
//!
//! Both variants run modified Gram-Schmidt Arnoldi with Givens rotations
//! and a residual recurrence inside each restart cycle, then recompute the
//! true residual when a cycle's solution is assembled. GMRES assumes the
//! preconditioner is a fixed linear map and applies it once per cycle to
//! the combined correction; FGMRES stores the preconditioned basis so the
//! preconditioner may change from one iteration to the next.

use crate::error::{Error, Result};
use crate::scalar::{axpy, dot, norm2, Scalar};

/// Parameters shared by both solvers.
#[derive(Debug, Clone, Copy)]
pub struct KrylovConfig {
    /// Relative residual target, `‖b - Ax‖ / ‖b‖`.
    pub tol: f64,
    /// Arnoldi cycle length before restarting.
    pub restart: usize,
    /// Total iteration cap across all cycles.
    pub max_iters: usize,
    /// Record the per-iteration recurrence residuals.
    pub record_history: bool,
}

impl Default for KrylovConfig {
    fn default() -> Self {
        KrylovConfig {
            tol: 1e-6,
            restart: 30,
            max_iters: 1000,
            record_history: true,
        }
    }
}

impl KrylovConfig {
    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(Error::config(format!(
                "relative tolerance must lie in (0, 1), got {}",
                self.tol
            )));
        }
        if self.restart == 0 {
            return Err(Error::config("restart length must be at least 1"));
        }
        if self.max_iters == 0 {
            return Err(Error::config("iteration cap must be positive"));
        }
        Ok(())
    }
}

/// Outcome of a Krylov solve.
#[derive(Debug, Clone)]
pub struct SolveResult<S> {
    /// Final iterate.
    pub x: Vec<S>,
    /// Total Arnoldi iterations performed.
    pub iterations: usize,
    /// True relative residual of the final iterate.
    pub relative_residual: f64,
    /// Whether the relative residual target was met.
    pub converged: bool,
    /// Whether the Hessenberg subdiagonal collapsed before convergence.
    pub breakdown: bool,
    /// Recurrence residuals, one per iteration (empty unless recorded).
    pub residual_history: Vec<f64>,
}

/// Complex-safe Givens rotation: returns `(c, s)` with real `c` such that
/// `[c s; -conj(s) c] [f; g] = [r; 0]`.
fn givens<S: Scalar>(f: S, g: S) -> (f64, S) {
    let af = f.abs();
    let ag = g.abs();
    if ag == 0.0 {
        return (1.0, S::zero());
    }
    if af == 0.0 {
        return (0.0, g.conj() / S::from_f64(ag));
    }
    let t = af.hypot(ag);
    let c = af / t;
    let s = f * g.conj() / S::from_f64(af * t);
    (c, s)
}

/// Solve the upper-triangular system accumulated in the rotated Hessenberg
/// columns: `cols[j][i]` holds `R[i][j]` for `i <= j`.
fn solve_triangular<S: Scalar>(cols: &[Vec<S>], g: &[S], k: usize) -> Vec<S> {
    let mut y = vec![S::zero(); k];
    for i in (0..k).rev() {
        let mut acc = g[i];
        for j in (i + 1)..k {
            acc -= cols[j][i] * y[j];
        }
        y[i] = acc / cols[i][i];
    }
    y
}

struct CoreOutcome<S> {
    result: SolveResult<S>,
    last_basis: Vec<Vec<S>>,
}

fn gmres_core<S: Scalar>(
    apply_a: &dyn Fn(&[S], &mut [S]),
    apply_pinv: &mut dyn FnMut(&[S], &mut [S]),
    b: &[S],
    cfg: &KrylovConfig,
    flexible: bool,
    keep_basis: bool,
) -> Result<CoreOutcome<S>> {
    cfg.validate()?;
    let n = b.len();
    let bnorm = norm2(b);
    let mut history = Vec::new();
    if bnorm == 0.0 {
        return Ok(CoreOutcome {
            result: SolveResult {
                x: vec![S::zero(); n],
                iterations: 0,
                relative_residual: 0.0,
                converged: true,
                breakdown: false,
                residual_history: history,
            },
            last_basis: Vec::new(),
        });
    }
    let breakdown_floor = 1e-14 * bnorm;

    let mut x = vec![S::zero(); n];
    let mut r = b.to_vec();
    let mut rel = 1.0;
    let mut iters = 0usize;
    let mut broke_down = false;
    let mut last_basis = Vec::new();
    let mut work = vec![S::zero(); n];

    'outer: while iters < cfg.max_iters {
        let beta = norm2(&r);
        if beta / bnorm <= cfg.tol {
            rel = beta / bnorm;
            break;
        }
        let m = cfg.restart;
        let mut basis: Vec<Vec<S>> = Vec::with_capacity(m + 1);
        let mut zbasis: Vec<Vec<S>> = Vec::new();
        let mut cols: Vec<Vec<S>> = Vec::with_capacity(m);
        let mut cs: Vec<f64> = Vec::with_capacity(m);
        let mut sn: Vec<S> = Vec::with_capacity(m);
        let mut g = vec![S::zero(); m + 1];
        g[0] = S::from_f64(beta);
        basis.push(r.iter().map(|&v| v / S::from_f64(beta)).collect());

        let mut k = 0usize;
        let mut cycle_done = false;
        while k < m && iters < cfg.max_iters {
            // w = A M^{-1} v_k, keeping Z only on the flexible path.
            let mut z = vec![S::zero(); n];
            apply_pinv(&basis[k], &mut z);
            apply_a(&z, &mut work);
            if flexible {
                zbasis.push(z);
            }
            let mut h = vec![S::zero(); k + 2];
            let w = &mut work;
            let norm_before = norm2(w);
            for (i, v) in basis.iter().enumerate() {
                let hik = dot(v, w);
                h[i] = hik;
                axpy(-hik, v, w);
            }
            let mut wnorm = norm2(w);
            if wnorm < 0.5 * norm_before {
                // Severe cancellation: one re-orthogonalization pass
                // restores the basis to working precision.
                for (i, v) in basis.iter().enumerate() {
                    let corr = dot(v, w);
                    h[i] += corr;
                    axpy(-corr, v, w);
                }
                wnorm = norm2(w);
            }
            h[k + 1] = S::from_f64(wnorm);
            let collapsed = wnorm <= breakdown_floor;
            if !collapsed {
                basis.push(w.iter().map(|&v| v / S::from_f64(wnorm)).collect());
            }
            // Apply the accumulated rotations, then a fresh one.
            for i in 0..k {
                let ci = S::from_f64(cs[i]);
                let t1 = ci * h[i] + sn[i] * h[i + 1];
                let t2 = ci * h[i + 1] - sn[i].conj() * h[i];
                h[i] = t1;
                h[i + 1] = t2;
            }
            let (c, s) = givens(h[k], h[k + 1]);
            let ck = S::from_f64(c);
            h[k] = ck * h[k] + s * h[k + 1];
            h[k + 1] = S::zero();
            let gk = g[k];
            g[k] = ck * gk;
            g[k + 1] = -s.conj() * gk;
            cs.push(c);
            sn.push(s);
            cols.push(h);
            iters += 1;
            k += 1;
            let rec = g[k].abs() / bnorm;
            if cfg.record_history {
                history.push(rec);
            }
            if collapsed {
                broke_down = true;
                cycle_done = true;
                break;
            }
            if rec <= cfg.tol {
                cycle_done = true;
                break;
            }
        }
        if k == 0 {
            break;
        }
        // Assemble the cycle's correction and refresh the true residual.
        let y = solve_triangular(&cols, &g, k);
        if flexible {
            for (j, z) in zbasis.iter().enumerate() {
                axpy(y[j], z, &mut x);
            }
        } else {
            let mut combo = vec![S::zero(); n];
            for j in 0..k {
                axpy(y[j], &basis[j], &mut combo);
            }
            let mut corr = vec![S::zero(); n];
            apply_pinv(&combo, &mut corr);
            for i in 0..n {
                x[i] += corr[i];
            }
        }
        apply_a(&x, &mut work);
        for i in 0..n {
            r[i] = b[i] - work[i];
        }
        rel = norm2(&r) / bnorm;
        if keep_basis {
            last_basis = basis;
        }
        if rel <= cfg.tol {
            break 'outer;
        }
        if broke_down {
            break 'outer;
        }
        let _ = cycle_done;
    }

    let converged = rel <= cfg.tol;
    Ok(CoreOutcome {
        result: SolveResult {
            x,
            iterations: iters,
            relative_residual: rel,
            converged,
            breakdown: broke_down && !converged,
            residual_history: history,
        },
        last_basis,
    })
}

/// Right-preconditioned restarted GMRES with a fixed linear preconditioner.
///
/// The preconditioner is applied once per Arnoldi step and once more per
/// cycle to the combined correction, so it must act as the same linear map
/// on every call.
pub fn gmres<S: Scalar>(
    apply_a: impl Fn(&[S], &mut [S]),
    apply_pinv: impl Fn(&[S], &mut [S]),
    b: &[S],
    cfg: &KrylovConfig,
) -> Result<SolveResult<S>> {
    let mut pinv = |r: &[S], z: &mut [S]| apply_pinv(r, z);
    Ok(gmres_core(&apply_a, &mut pinv, b, cfg, false, false)?.result)
}

/// Flexible GMRES: the preconditioner may differ from iteration to
/// iteration (an inner iterative solve, for instance), at the cost of
/// storing the preconditioned basis.
pub fn fgmres<S: Scalar>(
    apply_a: impl Fn(&[S], &mut [S]),
    mut apply_pinv: impl FnMut(&[S], &mut [S]),
    b: &[S],
    cfg: &KrylovConfig,
) -> Result<SolveResult<S>> {
    Ok(gmres_core(&apply_a, &mut apply_pinv, b, cfg, true, false)?.result)
}

#[cfg(test)]
pub(crate) fn gmres_with_final_basis<S: Scalar>(
    apply_a: impl Fn(&[S], &mut [S]),
    apply_pinv: impl Fn(&[S], &mut [S]),
    b: &[S],
    cfg: &KrylovConfig,
) -> Result<(SolveResult<S>, Vec<Vec<S>>)> {
    let mut pinv = |r: &[S], z: &mut [S]| apply_pinv(r, z);
    let out = gmres_core(&apply_a, &mut pinv, b, cfg, false, true)?;
    Ok((out.result, out.last_basis))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::DenseMatrix;
    use num_complex::Complex64;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn identity_precond<S: Scalar>() -> impl Fn(&[S], &mut [S]) {
        |r: &[S], z: &mut [S]| z.copy_from_slice(r)
    }

    fn random_well_conditioned(n: usize, seed: u64) -> DenseMatrix<f64> {
        let mut rng = StdRng::seed_from_u64(seed);
        DenseMatrix::from_fn(n, n, |i, j| {
            let noise = rng.gen_range(-0.1..0.1);
            if i == j {
                2.0 + noise
            } else {
                noise / n as f64
            }
        })
    }

    #[test]
    fn identity_converges_in_one_iteration() {
        let b = vec![1.0, -2.0, 3.0];
        let res = gmres(
            |x: &[f64], y: &mut [f64]| y.copy_from_slice(x),
            identity_precond(),
            &b,
            &KrylovConfig::default(),
        )
        .unwrap();
        assert!(res.converged);
        assert_eq!(res.iterations, 1);
        for (a, c) in res.x.iter().zip(&b) {
            assert!((a - c).abs() <= 1e-12);
        }
    }

    #[test]
    fn exact_inverse_preconditioner_converges_in_one_iteration() {
        let a = DenseMatrix::from_fn(2, 2, |i, j| [[4.0, 1.0], [1.0, 3.0]][i][j]);
        let ainv = a.inverse().unwrap();
        let b = vec![1.0, 2.0];
        let res = gmres(
            |x: &[f64], y: &mut [f64]| y.copy_from_slice(&a.mul_vec(x)),
            |r: &[f64], z: &mut [f64]| z.copy_from_slice(&ainv.mul_vec(r)),
            &b,
            &KrylovConfig::default(),
        )
        .unwrap();
        assert!(res.converged);
        assert_eq!(res.iterations, 1);
    }

    #[test]
    fn random_system_matches_dense_solve() {
        let n = 50;
        let a = random_well_conditioned(n, 42);
        let mut rng = StdRng::seed_from_u64(1);
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let cfg = KrylovConfig {
            tol: 1e-10,
            ..KrylovConfig::default()
        };
        let res = gmres(
            |x: &[f64], y: &mut [f64]| y.copy_from_slice(&a.mul_vec(x)),
            identity_precond(),
            &b,
            &cfg,
        )
        .unwrap();
        assert!(res.converged);
        let exact = a.solve(&b).unwrap();
        let diff: Vec<f64> = exact.iter().zip(&res.x).map(|(p, q)| p - q).collect();
        assert!(norm2(&diff) <= 1e-8 * norm2(&exact));
    }

    #[test]
    fn complex_system_matches_dense_solve() {
        let n = 24;
        let mut rng = StdRng::seed_from_u64(9);
        let a = DenseMatrix::from_fn(n, n, |i, j| {
            let z = Complex64::new(rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1));
            if i == j {
                Complex64::new(2.0, 1.0) + z
            } else {
                z
            }
        });
        let b: Vec<Complex64> = (0..n)
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let cfg = KrylovConfig {
            tol: 1e-12,
            ..KrylovConfig::default()
        };
        let res = gmres(
            |x: &[Complex64], y: &mut [Complex64]| y.copy_from_slice(&a.mul_vec(x)),
            identity_precond(),
            &b,
            &cfg,
        )
        .unwrap();
        assert!(res.converged);
        let exact = a.solve(&b).unwrap();
        let diff: Vec<Complex64> = exact.iter().zip(&res.x).map(|(p, q)| p - q).collect();
        assert!(norm2(&diff) <= 1e-9 * norm2(&exact));
    }

    #[test]
    fn fgmres_with_fixed_preconditioner_matches_gmres() {
        let n = 40;
        let a = random_well_conditioned(n, 7);
        let mut rng = StdRng::seed_from_u64(2);
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        // Fixed diagonal preconditioner.
        let d: Vec<f64> = (0..n).map(|i| 2.0 + (i as f64) / n as f64).collect();
        let cfg = KrylovConfig {
            tol: 1e-10,
            restart: 12,
            ..KrylovConfig::default()
        };
        let pg = {
            let d = d.clone();
            move |r: &[f64], z: &mut [f64]| {
                for i in 0..r.len() {
                    z[i] = r[i] / d[i];
                }
            }
        };
        let pf = {
            let d = d.clone();
            move |r: &[f64], z: &mut [f64]| {
                for i in 0..r.len() {
                    z[i] = r[i] / d[i];
                }
            }
        };
        let rg = gmres(|x: &[f64], y: &mut [f64]| y.copy_from_slice(&a.mul_vec(x)), pg, &b, &cfg).unwrap();
        let rf = fgmres(|x: &[f64], y: &mut [f64]| y.copy_from_slice(&a.mul_vec(x)), pf, &b, &cfg).unwrap();
        assert_eq!(rg.iterations, rf.iterations);
        assert_eq!(rg.residual_history.len(), rf.residual_history.len());
        for (p, q) in rg.residual_history.iter().zip(&rf.residual_history) {
            assert!((p - q).abs() <= 1e-12);
        }
        let diff: Vec<f64> = rg.x.iter().zip(&rf.x).map(|(p, q)| p - q).collect();
        assert!(norm2(&diff) <= 1e-12 * norm2(&rg.x));
    }

    #[test]
    fn fgmres_with_inner_gmres_converges_in_two_outer_iterations() {
        let n = 30;
        let a = random_well_conditioned(n, 5);
        let mut rng = StdRng::seed_from_u64(3);
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let inner_cfg = KrylovConfig {
            tol: 1e-12,
            ..KrylovConfig::default()
        };
        let res = fgmres(
            |x: &[f64], y: &mut [f64]| y.copy_from_slice(&a.mul_vec(x)),
            |r: &[f64], z: &mut [f64]| {
                let inner = gmres(
                    |x: &[f64], y: &mut [f64]| y.copy_from_slice(&a.mul_vec(x)),
                    |p: &[f64], q: &mut [f64]| q.copy_from_slice(p),
                    r,
                    &inner_cfg,
                )
                .unwrap();
                z.copy_from_slice(&inner.x);
            },
            &b,
            &KrylovConfig::default(),
        )
        .unwrap();
        assert!(res.converged);
        assert!(res.iterations <= 2, "took {} iterations", res.iterations);
    }

    #[test]
    fn zero_rhs_returns_zero_in_zero_iterations() {
        let res = fgmres(
            |x: &[f64], y: &mut [f64]| y.copy_from_slice(x),
            |r: &[f64], z: &mut [f64]| z.copy_from_slice(r),
            &[0.0; 5],
            &KrylovConfig::default(),
        )
        .unwrap();
        assert!(res.converged);
        assert_eq!(res.iterations, 0);
        assert!(res.x.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn iteration_cap_reported_as_not_converged() {
        let n = 60;
        // Ill-conditioned enough that 3 iterations cannot reach 1e-10.
        let a = DenseMatrix::from_fn(n, n, |i, j| {
            if i == j {
                1.0 + 10.0 * (i as f64) / n as f64
            } else if j + 1 == i {
                0.9
            } else {
                0.0
            }
        });
        let b = vec![1.0; n];
        let cfg = KrylovConfig {
            tol: 1e-10,
            restart: 3,
            max_iters: 3,
            record_history: true,
        };
        let res = gmres(
            |x: &[f64], y: &mut [f64]| y.copy_from_slice(&a.mul_vec(x)),
            identity_precond(),
            &b,
            &cfg,
        )
        .unwrap();
        assert!(!res.converged);
        assert_eq!(res.iterations, 3);
        assert!(res.relative_residual > 1e-10);
    }

    #[test]
    fn arnoldi_basis_stays_orthonormal_and_history_monotone_within_cycle() {
        let n = 50;
        let a = random_well_conditioned(n, 11);
        let mut rng = StdRng::seed_from_u64(4);
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let cfg = KrylovConfig {
            tol: 1e-12,
            restart: 60,
            ..KrylovConfig::default()
        };
        let (res, basis) = gmres_with_final_basis(
            |x: &[f64], y: &mut [f64]| y.copy_from_slice(&a.mul_vec(x)),
            identity_precond(),
            &b,
            &cfg,
        )
        .unwrap();
        assert!(res.converged);
        assert!(basis.len() >= 2);
        let mut worst = 0.0f64;
        for (i, vi) in basis.iter().enumerate() {
            for (j, vj) in basis.iter().enumerate() {
                let g = dot(vi, vj);
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g - target).abs());
            }
        }
        assert!(worst <= 1e-10, "orthogonality defect {worst:.3e}");
        // The recurrence residuals never increase inside a cycle.
        for w in res.residual_history.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12));
        }
    }

    #[test]
    fn invalid_configs_are_rejected_up_front() {
        let b = vec![1.0];
        let id = |x: &[f64], y: &mut [f64]| y.copy_from_slice(x);
        for bad in [
            KrylovConfig {
                tol: 0.0,
                ..KrylovConfig::default()
            },
            KrylovConfig {
                tol: 2.0,
                ..KrylovConfig::default()
            },
            KrylovConfig {
                restart: 0,
                ..KrylovConfig::default()
            },
            KrylovConfig {
                max_iters: 0,
                ..KrylovConfig::default()
            },
        ] {
            assert!(gmres(id, id, &b, &bad).is_err());
        }
    }
}
