//! Numerical core for optimal-transport gradient flows on a 1D grid.
//!
//! Modules, bottom up: [`grid`] (grids, measures, potentials), [`costs`]
//! (radial convex profiles and their conjugates), [`moduli`], [`transport`]
//! (exact 1D transport and Kantorovich potentials), [`jko`] (one-step
//! solver and flows), [`diagnostics`] (dissipation residuals and
//! certificates), [`criteria`] (pointwise criteria and test-function gaps),
//! and [`config`]/[`io`] for experiment files.

// Negated comparisons are used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod costs;
pub mod criteria;
pub mod diagnostics;
pub mod error;
pub mod grid;
pub mod io;
pub mod jko;
pub mod moduli;
pub mod transport;

pub use error::{Error, Result};
