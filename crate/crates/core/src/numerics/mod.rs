//! Numerical building blocks shared by the model modules.

pub mod fourier;
pub mod kahan;
pub mod quad;
pub mod spline;
pub mod tridiag;

pub use kahan::{kahan_sum, KahanSum};
pub use spline::PeriodicSpline;
