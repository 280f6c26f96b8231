//! Finite-volume simulation of chemotaxis-haptotaxis systems with nonlinear,
//! possibly degenerate, diffusion, together with monitors for the a-priori
//! estimates such systems satisfy.

// `!(x > 0.0)` style tests are how NaN gets rejected throughout
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod degenerate;
pub mod error;
pub mod grid;
pub mod model;
pub mod output;
pub mod monitor;
pub mod operators;
pub mod presets;
pub mod solver;
pub mod stepper;

pub use error::{Error, Result};
pub use grid::{Field, Grid};
pub use model::{DiffusionSpec, ModelParams};
