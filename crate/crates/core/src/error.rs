// Copyright 2026 The chirpmem Authors
// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("grid too coarse: dt = {dt:e} s exceeds the bound {bound:e} s ({what})")]
    GridTooCoarse { dt: f64, bound: f64, what: &'static str },

    #[error("pulse window [{start:e}, {end:e}] s is not contained in the grid [{grid_start:e}, {grid_end:e}] s")]
    WindowOutsideGrid {
        start: f64,
        end: f64,
        grid_start: f64,
        grid_end: f64,
    },

    #[error("events {first} and {second} overlap")]
    Overlap { first: usize, second: usize },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("fit did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("integrator step error: spin {spin} norm drifted by {drift:e}")]
    NormDrift { spin: usize, drift: f64 },

    #[error("non-adiabatic parameters: Q_min = {q_min:.3}")]
    NonAdiabatic { q_min: f64 },

    #[error("effective duration undefined: bandwidth {bandwidth:e} Hz is below the cavity linewidth {kappa:e} Hz, the full pulse duration applies")]
    BandwidthBelowLinewidth { bandwidth: f64, kappa: f64 },

    #[error("unknown mode `{0}`")]
    UnknownMode(String),

    #[error("program violation{}: {reason}", block.map(|b| format!(" at block {b}")).unwrap_or_default())]
    Program { block: Option<usize>, reason: String },

    #[error("FIFO window overflow: {0}")]
    WindowOverflow(String),

    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("unit error: {0}")]
    Unit(String),

    #[error("zero denominator in {0}")]
    ZeroDenominator(&'static str),

    #[error("sweep too sparse: {0}")]
    SweepTooSparse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
