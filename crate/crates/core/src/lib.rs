//! Numerical Finsler geometry.
//!
//! The crate computes, at points of the slit tangent bundle, the metric
//! tensor of a Finsler function, its canonical spray, the Berwald
//! connection and its curvatures, and builds geodesics, parallel transport,
//! Jacobi fields, quasi-distances and homothety checks on top of them.
//!
//! All partial derivatives of `F²` come from truncated multivariate Taylor
//! arithmetic ([`jets`]); a Richardson-extrapolated finite-difference
//! oracle is provided alongside for cross-validation.

// Index loops mirror the tensor notation; `!(a > b)` comparisons are meant to reject NaN.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod berwald;
pub mod cli;
pub mod error;
pub mod geodesic;
pub mod homothety;
pub mod jets;
pub mod metricspace;
pub mod models;
pub mod ode;
pub mod sampling;
pub mod tensor;

pub use error::{FinslerError, Result};
pub use jets::{PointedVector, Scalar, SiteProgram, TaylorScalar};
pub use models::{FinslerFunction, FinslerModel};
