//! Numerical lab for gradient-descent dynamics of deep linear networks
//! trained on the squared loss.
//!
//! The workflow: reduce a raw `(X, Y)` problem to canonical coordinates
//! ([`reduction`]), integrate the gradient flow ([`flow`]), classify where it
//! stops against the finite table of critical values ([`landscape`]), and
//! probe saddles with second-order tools ([`hessian`]). Monte Carlo
//! campaigns live in [`experiments`].

pub mod defaults;
pub mod error;
pub mod experiments;
pub mod flow;
pub mod hessian;
pub mod io;
pub mod landscape;
pub mod linalg;
pub mod network;
pub mod reduction;

pub use error::{Error, Result};
pub use network::{LayerDims, WeightTuple};
