//! Dynamics of quasi-periodic Schrodinger cocycles with peaky potentials.
//!
//! The crate computes Lyapunov exponents (on the real circle and on
//! complexified circles), fibered rotation numbers, q-step trace formulas,
//! ellipticity and regularity classifications, and finite-order normal
//! forms for cocycles `(alpha, S_{E-V})` with `S_W = [[W, -1], [1, 0]]`.

// `!(x > 0.0)` style guards also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod arithmetic;
pub mod classify;
pub mod cocycle;
pub mod config;
pub mod error;
pub mod fourier;
pub mod lyapunov;
pub mod mat2;
pub mod potentials;
pub mod reduce;
pub mod rotation;
pub mod scan;

pub use arithmetic::Frequency;
pub use error::{Error, Result};
pub use mat2::Mat2;
pub use potentials::Potential;
