//! Parallel-in-time preconditioned solver for time-dependent Stokes and
//! Oseen distributed-control problems.
//!
//! The library discretizes the coupled first-order optimality system of a
//! velocity-tracking control problem (backward Euler in time, inf-sup stable
//! quadrilateral mixed elements in space) and solves it with an outer Krylov
//! method preconditioned by a block-circulant approximation of the space-time
//! operator. A discrete Fourier transform in time decouples the
//! preconditioner into independent complex blocks, one per time frequency,
//! which are solved concurrently with nested iterations built from
//! multigrid, Chebyshev semi-iteration, and (for the convection-driven
//! family) an inexact Uzawa sweep.
//!
//! Crate layout:
//! * [`sparse`], [`dense`], [`scalar`] - generic linear-algebra kernels;
//! * [`mesh`], [`fem`] - uniform quadrilateral hierarchies and mixed-element
//!   assembly of mass/stiffness/convection/divergence operators;
//! * [`chebyshev`], [`multigrid`], [`krylov`] - the inner and outer
//!   iterative solvers;
//! * [`circulant`] - the time grid, circulant symbol, block Fourier
//!   transform, and block orderings;
//! * [`problem`], [`system`] - benchmark problem data and the matrix-free
//!   space-time operator with its right-hand side;
//! * [`stokes`], [`oseen`] - the per-frequency block solvers for the two
//!   problem families;
//! * [`parallel`] - the deterministic worker pool used for block solves;
//! * [`spectral`] - dense verification of the block identities and
//!   eigenvalue statements backing the preconditioner design;
//! * [`driver`] - run configuration, reporting, and the entry points shared
//!   by the command-line interface and the test suites.

pub mod chebyshev;
pub mod circulant;
pub mod dense;
pub mod driver;
pub mod error;
pub mod fem;
pub mod krylov;
pub mod mesh;
pub mod multigrid;
pub mod oseen;
pub mod parallel;
pub mod problem;
pub mod scalar;
pub mod sparse;
pub mod spectral;
pub mod stokes;
pub mod system;

pub use error::{Error, Result};
pub use scalar::Scalar;
