//! Distributed composite hypothesis testing over sparse agent networks.
//!
//! Two consensus+innovations GLRT detectors (nonlinear and linear sensing),
//! a centralized scalar baseline, closed-form threshold and error-exponent
//! bounds, and a seeded Monte Carlo harness.

pub mod bounds;
pub mod ciglrt_l;
pub mod ciglrt_nl;
pub mod config;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod network;
pub mod presets;
pub mod selftest;
pub mod sensing;

pub use error::{Error, Result};
