//! Shape controllability of semi-discrete heat and wave equations.
//!
//! This crate studies the finite-difference Laplacian on a rectangular grid
//! `[0, a] × [0, b]` whose left edge `x = 0` can be deformed in time, and asks
//! whether small deformations of that edge can steer the interior state to a
//! prescribed target at a final time. The pieces fit together as follows:
//!
//! * [`grid`] — the grid, node classification, and the flattening between
//!   Dirichlet grid fields and interior coefficient vectors;
//! * [`operators`] — the 5-point Laplacian, its deformation-perturbed variant,
//!   the derivative of the operator with respect to the deformation, and the
//!   uniform norm bound that makes everything well posed;
//! * [`domain_map`] — the matrix `B = |det J| · J⁻¹ · J⁻ᵀ` that transports the
//!   Laplacian through a change of variables with Jacobian `J`;
//! * [`dynamics`] — Crank–Nicolson for the heat flow and velocity Verlet for
//!   the wave flow, both with the operator frozen at step midpoints;
//! * [`sensitivity`] — linearized (Gateaux) states and the Fréchet remainder
//!   check that validates them against full nonlinear re-solves;
//! * [`adjoint`] — backward transpose dynamics, the duality pairing, the
//!   non-degeneracy of the first interior layer, and the column-by-column
//!   unique-continuation argument;
//! * [`control`] — the deformation-to-trace control map, its singular value
//!   analysis, and a damped Gauss–Newton solver for target reconstruction;
//! * [`config`] — the JSON run-configuration schema shared by library users
//!   and the binary;
//! * [`cli`] — a thin command-line front end over the above.
//!
//! The [`guide`] module carries a narrative walkthrough (also renderable as
//! an mdbook from `book/`); its examples compile and run as doc-tests.

pub mod adjoint;
pub mod cli;
pub mod config;
pub mod control;
pub mod domain_map;
pub mod dynamics;
pub mod error;
pub mod grid;
pub mod guide;
pub mod operators;
pub mod sensitivity;

pub use error::{Error, Result};
