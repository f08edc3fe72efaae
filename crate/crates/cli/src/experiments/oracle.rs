// Copyright 2026 The chirpmem Authors
// SPDX-License-Identifier: Apache-2.0

//! Numeric propagation through two different WURSTs against the
//! adiabatic-limit pair phase, spin by spin.

use std::f64::consts::TAU;

use chirpmem::analysis::adiabaticity_q;
use chirpmem::ensemble::{propagate, two_pulse_phase, EnsembleState, PropagateOptions, SpinEnsemble};
use chirpmem::waveforms::{render_timeline, wurst_pulse, ChirpSign, TimeGrid, WurstParams};
use chirpmem::Complex64;
use serde::{Deserialize, Serialize};

use super::{phase_distance, step_for};
use crate::error::Result;
use crate::quantity::{hz, seconds};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub n_spins: usize,
    #[serde(with = "hz")]
    pub bandwidth_0: f64,
    #[serde(with = "hz")]
    pub bandwidth_1: f64,
    #[serde(with = "seconds")]
    pub duration: f64,
    #[serde(with = "hz")]
    pub amplitude: f64,
    pub coupling_min: f64,
    /// Spins occupy |δ| below this fraction of the narrower half band.
    pub band_fraction: f64,
    /// Initial coherence |m₀|.
    pub epsilon: f64,
    /// Spins below this Q_min are excluded.
    pub q_min: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            n_spins: 400,
            bandwidth_0: 2e6,
            bandwidth_1: 1.6e6,
            duration: 500e-6,
            amplitude: 600e3,
            coupling_min: 0.5,
            band_fraction: 0.8,
            epsilon: 0.3,
            q_min: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleSpin {
    pub delta: f64,
    pub coupling: f64,
    pub q_min: f64,
    pub phase_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleSummary {
    pub spins: Vec<OracleSpin>,
    /// Spins at Q_min above the threshold.
    pub eligible: usize,
    /// Fraction of eligible spins within 0.05 rad.
    pub fraction_within: f64,
    pub tolerance: f64,
    pub max_norm_drift: f64,
}

pub const PHASE_TOLERANCE: f64 = 0.05;

pub fn run(cfg: &OracleConfig) -> Result<OracleSummary> {
    let p0 = WurstParams::new(cfg.bandwidth_0, cfg.duration, cfg.amplitude, ChirpSign::Up)?.at(0.6 * cfg.duration).with_phase(0.3);
    let p1 = WurstParams::new(cfg.bandwidth_1, cfg.duration, cfg.amplitude, ChirpSign::Down)?.at(1.9 * cfg.duration);
    let half = 0.5 * cfg.band_fraction * cfg.bandwidth_0.min(cfg.bandwidth_1);
    let n = cfg.n_spins.max(1);
    let delta: Vec<f64> = (0..n).map(|i| -half + 2.0 * half * (i as f64 + 0.5) / n as f64).collect();
    // Couplings cycle over [coupling_min, 1] so every detuning band sees the spread.
    let g0: Vec<f64> = (0..n).map(|i| cfg.coupling_min + (1.0 - cfg.coupling_min) * ((i * 7) % 11) as f64 / 10.0).collect();
    let ens = SpinEnsemble::new(delta.clone(), g0.clone(), vec![1.0 / n as f64; n], 1.0)?;

    // Half the simulation step keeps the norm drift bounded over long pulses.
    let dt = 0.5 * step_for(cfg.bandwidth_0.max(cfg.bandwidth_1).max(4.0 * cfg.amplitude), half);
    let grid = TimeGrid::aligned(0.0, dt, 0.0, 2.5 * cfg.duration)?;
    let drive = render_timeline(&[wurst_pulse(&p0, 0.0, dt)?, wurst_pulse(&p1, 0.0, dt)?], Some(&grid))?;
    let m0 = Complex64::from_polar(cfg.epsilon, 0.9);
    let z = -(1.0 - cfg.epsilon * cfg.epsilon).sqrt();
    let init = EnsembleState { bloch: vec![[m0.re, m0.im, z]; n] };
    let out = propagate(&init, &drive, &ens, PropagateOptions::default())?;
    let (t0, t1) = (drive.grid.t_start, drive.grid.t_end());

    let mut spins = Vec::with_capacity(n);
    for i in 0..n {
        let omega = cfg.amplitude * ens.scale(i);
        let theta = two_pulse_phase(&p0, &p1, delta[i], omega)?;
        let m_tilde0 = m0 * Complex64::from_polar(1.0, -TAU * delta[i] * t0);
        let want = m_tilde0 * Complex64::from_polar(1.0, 2.0 * theta + TAU * delta[i] * t1);
        let got = out.final_state.coherence(i);
        let q = adiabaticity_q(omega, p0.chirp_rate())?.min(adiabaticity_q(omega, p1.chirp_rate())?);
        spins.push(OracleSpin { delta: delta[i], coupling: g0[i], q_min: q, phase_error: phase_distance(got.arg(), want.arg()) });
    }
    let eligible: Vec<&OracleSpin> = spins.iter().filter(|s| s.q_min > cfg.q_min).collect();
    let within = eligible.iter().filter(|s| s.phase_error < PHASE_TOLERANCE).count();
    Ok(OracleSummary {
        eligible: eligible.len(),
        fraction_within: within as f64 / eligible.len().max(1) as f64,
        spins,
        tolerance: PHASE_TOLERANCE,
        max_norm_drift: out.max_norm_drift,
    })
}
