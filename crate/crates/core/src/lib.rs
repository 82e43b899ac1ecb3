//! Equilibrium sorting of heterogeneous workers into firms that compete on
//! amenities: model solver, closed-form moments, panel simulation,
//! moment measurement, calibration and counterfactual decomposition.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibrate;
pub mod counterfactual;
pub mod empirical;
pub mod error;
pub mod model;
pub mod moments;
pub mod panel;
pub mod quadrature;
pub mod sim;
pub mod stats;

pub use error::{Error, Result};
pub use model::{Economy, Equilibrium, ModelParams};
