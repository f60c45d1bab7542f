//! Susceptance placement for congestion relief in DC power flow.
//!
//! This crate models a transmission grid as a weighted graph, solves the
//! DC power-flow equations through a sparse LDL^T factorization of the
//! reduced Laplacian, and searches for the cheapest set of line
//! susceptance changes (series FACTS compensation) that brings every
//! line flow back inside its thermal limit. The search runs a sequence
//! of linear programs built from first-order flow models, either over
//! the full constraint set or over a growing active set of binding
//! constraints.
//!
//! Module tour:
//!
//! * [`grid`] — network model, MATPOWER import, native JSON formats;
//! * [`powerflow`] — Laplacian assembly, flow solves, critical scaling;
//! * [`linearize`] — exact flow Jacobians with respect to susceptances;
//! * [`lp`] — a deterministic bounded-variable simplex solver;
//! * [`optimizer`] — dispatch, scenario generation, placement, sweeps.

pub mod error;
pub mod grid;
pub mod linearize;
pub mod lp;
pub mod optimizer;
pub mod powerflow;
pub mod sparse;

pub use error::{Error, Result};
