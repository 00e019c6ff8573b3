//! Nonlinear stochastic navigation observer on SE2(3).
//!
//! Fuses gyroscope, accelerometer and landmark measurements into estimates of
//! attitude, position and linear velocity, together with an adaptive bound on
//! the IMU noise covariance and, optionally, the gravity vector.
//!
//! The modules build on one another: [`lie`] and [`quat`] provide the group
//! algebra, [`measurement`] turns landmark readings into the aggregates the
//! correction needs, [`observer`] is the estimator itself, [`sim`] generates
//! synthetic trajectories and sensor data, and [`dataset`] reads and writes
//! logs and run configurations.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod error;
pub mod lie;
pub mod measurement;
pub mod observer;
pub mod quat;
pub mod sim;

pub use error::{Error, Result};
pub use lie::{Mat3, Mat5, NavState, Rotation, TangentElement, Vec3};
pub use measurement::{
    ConfigReport, Landmark, LandmarkMap, LandmarkObservation, MeasurementSummary, Reading,
};
pub use observer::{
    Correction, Gains, GravityMode, InnovationPoint, Metrics, Observer, ObserverState,
    QuatObserverState,
};
pub use quat::Quat;
