//! Hamilton–Jacobi theory and integration by quadratures for contact
//! Hamiltonian systems in Darboux coordinates.
//!
//! The crate checks the solution conditions of the contact Hamilton–Jacobi
//! equation numerically and reconstructs trajectories from complete solutions,
//! validating them against a Runge–Kutta oracle.

// `!(a < b)` is used on purpose so that NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod biiso;
pub mod cli;
pub mod error;
pub mod expr;
pub mod geometry;
pub mod hje;
pub mod linalg;
pub mod quad;
pub mod reconstruct;
pub mod refint;
pub mod systems;

pub use error::{Error, Result};
