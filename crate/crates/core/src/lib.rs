//! Ground states of the Neumann Schrödinger operator `−Δ + V` on `[0,1]^d`.
//!
//! Core math is generic over [`Scalar`] (`f32` or `f64`); the aliases below
//! fix the scalar type for the common case.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ansatz;
pub mod bounds;
pub mod error;
pub mod estimators;
pub mod linalg;
pub mod optim;
pub mod quadrature;
pub mod rademacher;
pub mod reference;
pub mod sampling;
pub mod scalar;
pub mod spectral;
pub mod trainer;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Series = spectral::CosineSeries<f64>;
pub type Series32 = spectral::CosineSeries<f32>;
pub type Samples = sampling::SampleSet<f64>;
pub type Truth = reference::GroundTruth<f64>;
pub type Network = ansatz::TwoLayerNetwork<f64>;
pub type Network32 = ansatz::TwoLayerNetwork<f32>;
