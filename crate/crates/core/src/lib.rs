//! Numerical toolkit for zero-sum stochastic differential games with impulse
//! controls.
//!
//! The value function solves a double-obstacle quasi-variational inequality.
//! [`hjbi`] integrates it with a monotone explicit finite-difference scheme,
//! [`lattice`] recomputes it by backward induction on a Markov chain, and
//! [`simulate`] evaluates extracted feedback policies by Monte Carlo.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod field;
pub mod grid;
pub mod hjbi;
pub mod impulse;
pub mod intervention;
pub mod io;
pub mod lattice;
pub mod problem;
pub mod simulate;

pub use field::{Region, ValueField};
pub use grid::{Axis, GridError, GridSlice, SpaceTimeGrid, SpatialGrid};
pub use hjbi::{solve_pde, SolverError, SolverOptions};
pub use problem::{canonical, evaluate_coefficients, CoefficientForm, DiscreteImpulseSet, ProblemError, ProblemSpec};
