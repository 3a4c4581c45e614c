//! Numerical laboratory for fully nonlinear uniformly elliptic equations
//! `F(D²u) = A` posed in exterior domains.
//!
//! The crate is organized around five layers:
//!
//! * [`operator`]: Pucci extremal operators, Bellman families, duals, and
//!   property checks (uniform ellipticity sandwich, positive 1-homogeneity).
//! * [`fundamental`]: closed-form fundamental solutions of the Pucci
//!   operators, scaling exponents, and numerical exponent estimation for
//!   rotation-invariant operators.
//! * [`solver`]: monotone finite-difference Dirichlet solvers on radial and
//!   polar grids driven by Howard policy iteration, plus comparison and
//!   convergence tooling.
//! * [`asymptotics`]: extraction of the asymptotic linear/quadratic
//!   polynomial from exterior data, tail decay fitting, and the five-way
//!   classification of tails against fundamental-solution envelopes.
//! * [`harness`]: reproducible experiment driver with declarative configs,
//!   CSV/JSON artifacts, parameter sweeps, and golden-file verification.

pub mod asymptotics;
pub mod fit;
pub mod fundamental;
pub mod grid;
pub mod harness;
pub mod interp;
pub mod linsys;
pub mod operator;
pub mod solver;

pub use grid::{Grid, GridFunction, PolarGrid, RadialGrid};
pub use operator::{Ellipticity, OperatorSpec, SymMatrix};
