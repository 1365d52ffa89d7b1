//! Structure-preserving finite-volume simulation of a cross-diffusion
//! Cahn–Hilliard system with volume filling.
//!
//! The implicit two-point scheme in [`scheme`] conserves species masses,
//! keeps the per-cell volume fractions summing to one, stays positive and
//! dissipates the discrete free energy of [`model`]. [`diagnostics`] measures
//! all of these along a run; [`stationary`] solves the Euler–Lagrange system
//! for critical points of the energy at fixed masses.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod config;
pub mod diagnostics;
pub mod error;
pub mod mesh;
pub mod model;
pub mod scheme;
pub mod state;
pub mod stationary;

pub use error::{Error, NewtonFailure, Result};
pub use mesh::{CellField, Mesh};
pub use model::{EnergyBreakdown, ModelParams};
pub use state::State;
