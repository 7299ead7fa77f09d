//! Numerical laboratory for periodically forced overdamped double-well
//! diffusions: frozen-slice spectral data, the two-state jump reduction, the
//! invariant density, capacity bounds, Monte Carlo first-passage sampling and
//! closed-form transition-time laws.

// `!(v > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod capacity;
pub mod invariant;
pub mod jump;
pub mod mc;
pub mod numerics;
pub mod potential;
pub mod predictor;
pub mod rng;
pub mod spectral;
pub mod stats;
