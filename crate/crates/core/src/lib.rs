//! Data-driven power flow linearization.
//!
//! Learns affine maps between bus injections, voltages and branch flows from
//! operating snapshots, and compares them with the model-based DC and
//! decoupled linear power flow approximations. An AC power flow solver
//! provides the ground truth.

pub mod acpf;
pub mod baselines;
pub mod cases;
pub mod error;
pub mod evaluation;
pub mod mapping;
pub mod network;
pub mod regression;
pub mod scenario;

pub use error::{Error, Result};
