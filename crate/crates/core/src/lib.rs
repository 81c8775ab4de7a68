//! Log-optimal portfolios and optimal deflators for jump-diffusion models
//! described by piecewise-constant predictable characteristics `(b, c, F)`.

// `!(x > 0.0)` deliberately rejects NaN alongside non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod geometry;
pub mod inequalities;
pub mod linalg;
pub mod model;
pub mod objective;
pub mod processes;
pub mod sampling;
pub mod solver;
pub mod stats;

pub use model::{Characteristics, JumpAtom, JumpMeasure, MarketModel, Matrix, Segment, Vector};
