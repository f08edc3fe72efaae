// Copyright 2026 The chirpmem Authors
// SPDX-License-Identifier: Apache-2.0

//! Simulation and analysis toolkit for a chirped-pulse random-access ensemble
//! memory.
//!
//! The pipeline runs in five stages:
//!
//! 1. [`waveforms`] synthesizes WURST chirps and Gaussian excitations as
//!    complex baseband envelopes (units: Hz of Rabi frequency).
//! 2. [`cavity`] filters drives through the resonator using input-output
//!    theory and evaluates resonator lineshapes and cooperativity.
//! 3. [`ensemble`] propagates an inhomogeneous ensemble of two-level spins
//!    under the intracavity drive and collects the emitted polarization.
//! 4. [`protocol`] compiles WRITE/READ/IDLE memory programs into timed pulse
//!    schedules with predicted echo timetables.
//! 5. [`analysis`] extracts echoes and fits decay models, calibration
//!    quantities and the mode map.
//!
//! All configuration-facing frequencies are ordinary frequencies in Hz and
//! linewidths are FWHM. Conversion to angular units happens inside kernels.

pub mod analysis;
pub mod cavity;
pub mod ensemble;
pub mod error;
pub mod fit;
pub mod io;
pub mod protocol;
pub mod rk4;
pub mod sim;
pub mod units;
pub mod waveforms;

pub use error::{Error, Result};

pub use num_complex::Complex64;
