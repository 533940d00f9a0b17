//! Simulation and analysis of clonal interference in a three-type
//! birth-death model with type-dependent competition.

// `!(x > 0.0)` is used deliberately so that NaN counts as a failure.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bd;
pub mod ecology;
pub mod harness;
pub mod lv;
pub mod phase;
pub mod predict;
pub mod presets;
pub mod sim;

pub use ecology::{EcologyParams, FitnessSummary, TypeIndex};
