//! Models and inference for superconducting cavity-electromechanical devices.
//!
//! The crate is `no_std` (it needs `alloc`) and covers:
//!
//! - [`physics`]: constants, unit conversions and Bose statistics
//! - [`circuit`]: lumped-element coil/capacitor description and the vacuum coupling chain
//! - [`response`]: bare-cavity and electromechanically induced transparency reflection spectra,
//!   drive calibration and back-action rates
//! - [`langevin`]: rate-equation dynamics, back-action cooling and a linearized
//!   input-output noise solver
//! - [`inference`]: a Levenberg–Marquardt engine and model adapters that turn traces into
//!   parameter estimates with 95% confidence intervals
//!
//! Every angular frequency inside the crate is in rad/s. Cyclic (Hz) values only appear at
//! the edges, through [`physics::AngularFrequency`] and the `*_hz` helpers.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod circuit;
pub mod error;
pub mod inference;
pub mod langevin;
pub(crate) mod linalg;
pub mod physics;
pub mod response;

pub use error::{Error, Result};
pub use num_complex::Complex64;
