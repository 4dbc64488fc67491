//! Distributed-control problem data: desired state, forcing, boundary and
//! initial values, optional wind, and the two benchmark configurations -
//! a manufactured problem with a known closed-form solution and a
//! lid-driven cavity with a two-vortex wind.

use std::sync::Arc;

use crate::circulant::TimeGrid;
use crate::error::{Error, Result};
use crate::fem::WindFn;

/// Vector field over space and time.
pub type SpaceTimeField = Arc<dyn Fn(f64, f64, f64) -> [f64; 2] + Send + Sync>;
/// Vector field over space alone.
pub type SpaceField = Arc<dyn Fn(f64, f64) -> [f64; 2] + Send + Sync>;
/// Scalar field over space and time.
pub type SpaceTimeScalar = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;

/// Closed-form solution attached to a problem for error studies.
#[derive(Clone)]
pub struct ExactSolution {
    /// Velocity.
    pub v: SpaceTimeField,
    /// Pressure, defined up to an additive constant.
    pub p: SpaceTimeScalar,
}

/// Data of one tracking-type control problem on the square `[-1,1]^2`.
#[derive(Clone)]
pub struct ControlProblem {
    /// Desired (tracked) velocity.
    pub v_d: SpaceTimeField,
    /// Forcing in the state equation.
    pub f: SpaceTimeField,
    /// Dirichlet boundary velocity.
    pub h: SpaceTimeField,
    /// Initial velocity.
    pub v0: SpaceField,
    /// Convective wind; `None` gives the symmetric (Stokes) problem.
    pub wind: Option<Arc<WindFn>>,
    /// Control regularization weight.
    pub beta: f64,
    /// Viscosity.
    pub nu: f64,
    /// Time discretization.
    pub grid: TimeGrid,
    /// Closed-form solution, when one is known.
    pub exact: Option<ExactSolution>,
}

impl ControlProblem {
    /// Basic parameter validation.
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0) {
            return Err(Error::config(format!(
                "regularization weight must be positive, got {}",
                self.beta
            )));
        }
        if !(self.nu > 0.0) {
            return Err(Error::config(format!(
                "viscosity must be positive, got {}",
                self.nu
            )));
        }
        if let Some(exact) = &self.exact {
            // The closed form must reproduce the boundary and initial data.
            let t_final = self.grid.t_final();
            for k in 0..=8 {
                let s = -1.0 + 0.25 * k as f64;
                for (x, y) in [(s, -1.0), (s, 1.0), (-1.0, s), (1.0, s)] {
                    for t in [0.0, 0.5 * t_final, t_final] {
                        let hv = (self.h)(x, y, t);
                        let ev = (exact.v)(x, y, t);
                        if (hv[0] - ev[0]).abs() > 1e-10 || (hv[1] - ev[1]).abs() > 1e-10 {
                            return Err(Error::config(format!(
                                "closed-form velocity disagrees with boundary data at ({x}, {y}, {t})"
                            )));
                        }
                    }
                }
                let xi = 0.9 * (-1.0 + 0.25 * k as f64);
                let iv = (self.v0)(xi, -xi * 0.5);
                let ev = (exact.v)(xi, -xi * 0.5, 0.0);
                if (iv[0] - ev[0]).abs() > 1e-10 || (iv[1] - ev[1]).abs() > 1e-10 {
                    return Err(Error::config(format!(
                        "closed-form velocity disagrees with initial data at ({xi})"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Same problem with a different viscosity; the closed-form solution is
    /// dropped because it is tied to unit viscosity.
    pub fn with_viscosity(mut self, nu: f64) -> Self {
        self.nu = nu;
        self.exact = None;
        self
    }
}

/// Manufactured tracking problem with unit viscosity whose optimal state is
/// known in closed form: `v = e^{T-t} (20 x1 x2^3, 5 x1^4 - 5 x2^4)` with a
/// matching polynomial pressure. Boundary and initial data are the traces
/// of `v`; the desired state and forcing are chosen so that the optimality
/// system is satisfied exactly.
pub fn stokes_manufactured(beta: f64, grid: TimeGrid) -> ControlProblem {
    let t_final = grid.t_final();
    let v = move |x1: f64, x2: f64, t: f64| -> [f64; 2] {
        let e = (t_final - t).exp();
        [20.0 * e * x1 * x2.powi(3), 5.0 * e * (x1.powi(4) - x2.powi(4))]
    };
    let p = move |x1: f64, x2: f64, t: f64| -> f64 {
        (t_final - t).exp() * (60.0 * x1 * x1 * x2 - 20.0 * x2.powi(3))
    };
    let v_d = move |x1: f64, x2: f64, t: f64| -> [f64; 2] {
        let e = (t_final - t).exp();
        let a1 = x1 * x1 - 1.0;
        let a2 = x2 * x2 - 1.0;
        let static1 = 4.0 * beta * x2 * (2.0 * (3.0 * x1 * x1 - 1.0) * a2 + 3.0 * a1 * a1);
        let static2 = -4.0 * beta * x1 * (3.0 * a2 * a2 + 2.0 * a1 * (3.0 * x2 * x2 - 1.0));
        let dyn1 = e
            * (20.0 * x1 * x2.powi(3)
                + 2.0 * beta
                    * x2
                    * (a1 * a1 * (x2 * x2 - 7.0) - 4.0 * (3.0 * x1 * x1 - 1.0) * a2 + 2.0));
        let dyn2 = e
            * (5.0 * (x1.powi(4) - x2.powi(4))
                - 2.0 * beta
                    * x1
                    * (a2 * a2 * (x1 * x1 - 7.0) - 4.0 * a1 * (3.0 * x2 * x2 - 1.0) - 2.0));
        [static1 + dyn1, static2 + dyn2]
    };
    let f = move |x1: f64, x2: f64, t: f64| -> [f64; 2] {
        let e = (t_final - t).exp();
        let a1 = x1 * x1 - 1.0;
        let a2 = x2 * x2 - 1.0;
        let g1 = 2.0 * x2 * a1 * a1 * a2;
        let g2 = -2.0 * x1 * a1 * a2 * a2;
        [
            e * (-20.0 * x1 * x2.powi(3) - g1) + g1,
            e * (5.0 * (x2.powi(4) - x1.powi(4)) - g2) + g2,
        ]
    };
    ControlProblem {
        v_d: Arc::new(v_d),
        f: Arc::new(f),
        h: Arc::new(v),
        v0: Arc::new(move |x1, x2| v(x1, x2, 0.0)),
        wind: None,
        beta,
        nu: 1.0,
        grid,
        exact: Some(ExactSolution {
            v: Arc::new(v),
            p: Arc::new(p),
        }),
    }
}

/// Lid-driven cavity tracking problem: the lid (top edge) moves with unit
/// speed, the initial state is a wedge-shaped plug flow, the desired state
/// is a large rotating pattern with a lid-adapted correction, and the wind
/// consists of two counter-rotating vortices supported on disjoint
/// ellipses centered at `(1/2, 0)` and `(-1/2, 0)`.
pub fn oseen_cavity(beta: f64, nu: f64, grid: TimeGrid) -> ControlProblem {
    let v_d = move |x1: f64, x2: f64, _t: f64| -> [f64; 2] {
        let s = (1.0 - x1.powi(4)) * (1.0 - x2.powi(4));
        let mut out = [2.0 * x2 * s, -2.0 * x1 * s];
        if x2 >= 0.8 {
            out[0] += 5.0 * x2 - 4.0;
        }
        out
    };
    let f = move |x1: f64, x2: f64, _t: f64| -> [f64; 2] {
        let a1 = x1 * x1 - 1.0;
        let a2 = x2 * x2 - 1.0;
        [
            -20.0 * x1 * x2.powi(3) - 2.0 * x2 * a1 * a1 * a2,
            5.0 * (x2.powi(4) - x1.powi(4)) + 2.0 * x1 * a1 * a2 * a2,
        ]
    };
    let h = move |_x1: f64, x2: f64, _t: f64| -> [f64; 2] {
        if x2 == 1.0 {
            [1.0, 0.0]
        } else {
            [0.0, 0.0]
        }
    };
    let v0 = move |x1: f64, x2: f64| -> [f64; 2] {
        if x1 > -x2 && x1 < x2 {
            [1.0, 0.0]
        } else {
            [0.0, 0.0]
        }
    };
    let wind = move |x1: f64, x2: f64| -> [f64; 2] {
        let a: f64 = 100.0 / 99.0;
        let b: f64 = 100.0 / 49.0;
        let c1 = 1.0 - ((b * (x1 - 0.5)).powi(2) + (a * x2).powi(2)).sqrt();
        if c1 > 0.0 {
            return [c1 * a * a * x2, -c1 * b * b * (x1 - 0.5)];
        }
        let c2 = 1.0 - ((b * (x1 + 0.5)).powi(2) + (a * x2).powi(2)).sqrt();
        if c2 > 0.0 {
            return [-c2 * a * a * x2, c2 * b * b * (x1 + 0.5)];
        }
        [0.0, 0.0]
    };
    ControlProblem {
        v_d: Arc::new(v_d),
        f: Arc::new(f),
        h: Arc::new(h),
        v0: Arc::new(v0),
        wind: Some(Arc::new(wind)),
        beta,
        nu,
        grid,
        exact: None,
    }
}
