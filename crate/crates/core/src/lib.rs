//! Numerical laboratory for the discrete Jacobi heat semigroup.

// `!(x > 0.0)` is the idiom that also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod basis;
pub mod eigen;
pub mod error;
pub mod heat;
pub mod norms;
pub mod paths;
pub mod quadrature;
pub mod signal;
pub mod verify;
pub mod weights;

pub use basis::JacobiParams;
pub use error::{Error, Result};
pub use signal::Signal;
