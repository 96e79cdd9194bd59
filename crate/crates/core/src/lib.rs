//! Simulation of distributed composite stochastic optimization under
//! contractive gradient compression.
//!
//! Clients hold smooth losses `f_i`, the server minimizes
//! `F = (1/n) sum_i f_i + psi` with dual averaging, and each client sends
//! compressed messages through an error-feedback mechanism. The crate also
//! contains the proximal EF and EF21 baselines, the theoretical stepsize
//! presets and runtime checks of the per-trajectory inequalities.

// `!(x > 0.0)` rejects NaN along with nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod algorithms;
pub mod composite;
pub mod compressors;
pub mod diagnostics;
pub mod error;
pub mod feedback;
pub mod numkit;
pub mod problems;

pub use error::{Error, Result};
