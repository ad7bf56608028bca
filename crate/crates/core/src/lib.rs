//! Numerical laboratory for non-self-adjoint, p-subordinated perturbations of
//! self-adjoint operators with gapped spectrum.
//!
//! The crate builds finite model operators `T` whose spectrum sits in bands
//! separated by power-law gaps, perturbs them by `B` with
//! `‖Bx‖ ≤ b‖Tx‖^p‖x‖^{1-p}`, checks where the spectrum of `A = T + B` lands,
//! computes Riesz projections of `A` by contour quadrature and measures how far
//! the resulting family of invariant subspaces is from an orthogonal one.

pub mod basis;
pub mod contour;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod mmio;
pub mod operator_lab;
pub mod quadrature;
pub mod region;
pub mod registry;
pub mod resolvent;
pub mod riesz;
pub mod surgery;

pub use error::{LabError, Result};
