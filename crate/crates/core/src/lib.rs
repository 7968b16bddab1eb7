//! Numerical core for multi-task manifold pose regression.
//!
//! * [`linalg`]: row-major [`Matrix`], [`Tensor4`], thin SVD, SPD solves.
//! * [`prox`]: closed-form proximal operators and projections.
//! * [`mtl`]: the four regularized multi-task least-squares solvers.
//! * [`lrr`]: low-rank representation by inexact ALM and the manifold
//!   regularization transform built on top of it.

pub mod error;
pub mod linalg;
pub mod lrr;
pub mod mtl;
pub mod prox;

pub use error::{Error, Result};
pub use linalg::{Matrix, SvdResult, Tensor4};
