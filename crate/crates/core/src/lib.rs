//! Lighthouse sweep-beam positioning: base-station geometry for both hardware
//! generations, crossing-beam triangulation, a sweep-angle EKF, a synthetic
//! session generator and the spatiotemporal alignment / accuracy pipeline.
//!
//! The crate is `no_std` (with `alloc`) when the default `std` feature is
//! disabled. File formats and the command-line front end live in the
//! `lhtrack` crate.

#![cfg_attr(not(feature = "std"), no_std)]
#![deny(unsafe_code)]

extern crate alloc;

pub mod alignment;
pub mod crossing_beam;
pub mod ekf;
mod error;
pub mod geometry;
pub mod metrics;
pub mod simulator;

pub use alignment::{AlignConfig, AlignedDataset, AlignedRecord, RigidTransform};
pub use crossing_beam::{CrossingBeam, CrossingBeamResult, Epoch, Ray};
pub use ekf::{Ekf, EkfConfig, EkfState};
pub use error::{Error, Result};
pub use geometry::{BaseStation, LhVersion, Plane, SensorDeck, SweepAngle, SweepPlane};
pub use metrics::{FilterPolicy, MetricsReport};
pub use simulator::{ScenarioConfig, SessionBundle, SimulatedSession};

/// 3-vector of `f64`, meters unless noted otherwise.
pub type Vec3 = nalgebra::Vector3<f64>;
/// 3×3 matrix of `f64`.
pub type Mat3 = nalgebra::Matrix3<f64>;
