//! Instrumental-variable G-estimation of the exposure impact number (EIN),
//! the number needed to be exposed (NNE) and the number needed to treat
//! (NNT) for a binary exposure, binary outcome and binary instrument.
//!
//! The estimation core is generic over [`scalar::Scalar`] (`f32` or `f64`);
//! data generation and the simulation harness are `f64` only.

pub mod dgp;
pub mod domain;
pub mod error;
pub mod estimator;
pub mod harness;
pub mod linkmath;
pub mod scalar;
pub mod variance;

pub use domain::{Index, ModelSpec, ObservationRecord, ObservationSet, Param};
pub use linkmath::LinkKind;

pub type Theta = domain::ThetaVector<f64>;
pub type Report = domain::EstimateReport<f64>;
