//! Information loss `H(X|Y)` of deterministic piecewise maps of continuous
//! random vectors: output densities, three loss estimators, upper bounds and
//! a finite/infinite classifier.

// `!(v > 0.0)` style guards are meant to reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod cli;
pub mod classify;
pub mod config;
pub mod error;
pub mod expr;
pub mod geometry;
pub mod loss;
pub mod model;
pub mod numerics;
pub mod presets;
pub mod report;
pub mod transform;

mod slots;

pub use error::{Error, Result};
pub use slots::MAX_DIM;
