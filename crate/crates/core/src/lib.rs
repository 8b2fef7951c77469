//! Non-asymptotic inference for covariance operators of functional data.
//!
//! Curves live on a discretized interval ([`Grid`]) and covariance operators are
//! kernel matrices whose spectra are taken in the quadrature-weighted geometry, so
//! every p-Schatten norm approximates the norm of the underlying integral operator.
//! On top of that sit Talagrand-type confidence radii with Rademacher
//! symmetrization ([`concentration`]), a k-sample test for equality of
//! covariance operators ([`ktest`]), a concentration-based Bayes classifier
//! ([`classify`]), an EM-style clustering of operators ([`cluster`]), simulation
//! helpers ([`simulate`]) and an experiment harness ([`harness`]).
//!
//! The `examples/` directory of this crate has one runnable program per
//! capability; `covconc --help` lists the command line entry points.

pub mod classify;
pub mod cluster;
pub mod concentration;
pub mod error;
pub mod harness;
pub mod io;
pub mod ktest;
pub mod operator;
pub mod rng;
pub mod simulate;
pub mod stats;

pub use error::{Error, Result};
pub use operator::{
    inner_product, interpolate, operator_sqrt, procrustes_distance, schatten_norm,
    tensor_square, CovOperator, Curve, Grid, SchattenP,
};
pub use stats::{FunctionalSample, OperatorSample, RademacherDraw};
