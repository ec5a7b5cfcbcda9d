// Copyright 2026 The Ququart Developers
// SPDX-License-Identifier: Apache-2.0

//! Pulse-level control of a transmon ququart.
//!
//! The crate covers the full workflow for a single four-level transmon:
//! native-gate decomposition, optimal-control pulse synthesis, noisy
//! simulation, Clifford groups, randomized benchmarking and process
//! tomography. All physical quantities are SI internally (seconds, rad/s);
//! pulse coefficients are in MHz of on-chip Rabi rate.

pub mod benchmark;
pub mod clifford;
pub mod decompose;
pub mod device;
pub mod error;
pub mod gates;
pub mod linalg;
pub mod optctrl;
pub mod optim;
pub mod pulse;
pub mod sim;
pub mod tomography;

pub use device::{DeviceModel, Spectrum};
pub use error::{Error, Result};
pub use gates::{PhaseVector, TwoQubitLabel, Unitary};
