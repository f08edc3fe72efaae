// Copyright 2026 The chirpmem Authors
// SPDX-License-Identifier: Apache-2.0

//! First-in first-out storage: several excitations ahead of one identical
//! pulse pair come back 4τ later in input order with their phases.

use chirpmem::ensemble::{sample_ensemble, CouplingDist, DetuningDist, EnsembleSpec, Sampling};
use chirpmem::protocol::{build_fifo, default_excitation, ModeRegistry};
use chirpmem::sim::{simulate, SimConfig, SimResult};
use chirpmem::waveforms::{ChirpSign, GaussianParams, WurstParams};
use serde::{Deserialize, Serialize};

use super::{expected_echo_phase, inverted_at, phase_distance, step_for, write_run, SUMMARY_SCHEMA};
use crate::bundle::Bundle;
use crate::error::Result;
use crate::quantity::{hz, rad, seconds};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FifoConfig {
    pub n_spins: usize,
    #[serde(with = "hz")]
    pub bandwidth: f64,
    #[serde(with = "seconds")]
    pub duration: f64,
    #[serde(with = "hz")]
    pub amplitude: f64,
    #[serde(with = "hz")]
    pub linewidth: f64,
    #[serde(with = "hz")]
    pub detuning_max: f64,
    pub coupling_min: f64,
    #[serde(with = "hz")]
    pub excitation_amplitude: f64,
    #[serde(with = "seconds")]
    pub spacing: f64,
    /// Half the pair spacing; long enough to hold every excitation.
    #[serde(with = "seconds")]
    pub tau: f64,
    /// Drive phase of each excitation; their count sets the number stored.
    #[serde(with = "rad::list")]
    pub phases: Vec<f64>,
    pub decimation: usize,
}

impl Default for FifoConfig {
    fn default() -> Self {
        use std::f64::consts::PI;
        Self {
            n_spins: 2000,
            bandwidth: 1e6,
            duration: 100e-6,
            amplitude: 150e3,
            linewidth: 100e3,
            detuning_max: 300e3,
            coupling_min: 0.7,
            excitation_amplitude: 2e3,
            spacing: 15e-6,
            tau: 100e-6,
            phases: vec![0.0, 0.5 * PI, PI, 1.5 * PI, 0.25 * PI],
            decimation: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RetrievedRow {
    pub source: usize,
    pub input_phase: f64,
    pub expected_phase: f64,
    pub t_predicted: f64,
    pub t_center: f64,
    pub amplitude: f64,
    pub phase: f64,
    pub phase_error: f64,
    pub found: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FifoSummary {
    pub schema: u32,
    pub n_spins: usize,
    pub rows: Vec<RetrievedRow>,
    /// Sources in order of echo time.
    pub order: Vec<usize>,
    pub max_phase_error: f64,
    pub max_norm_drift: f64,
}

pub struct FifoRun {
    pub summary: FifoSummary,
    pub sim: SimResult,
    pub decimation: usize,
}

pub fn run(cfg: &FifoConfig, seed: u64) -> Result<FifoRun> {
    let a = WurstParams::new(cfg.bandwidth, cfg.duration, cfg.amplitude, ChirpSign::Up)?;
    let reg = ModeRegistry::new().with("A", a);
    let template = default_excitation(cfg.excitation_amplitude);
    let tau = cfg.tau;
    let excitations: Vec<GaussianParams> = cfg
        .phases
        .iter()
        .enumerate()
        .map(|(i, &phase)| GaussianParams { center: i as f64 * cfg.spacing, phase, ..template })
        .collect();
    let sched = build_fifo(&excitations, "A", tau, &reg)?;
    let spec = EnsembleSpec {
        n_spins: cfg.n_spins,
        detuning: DetuningDist::Lorentzian { fwhm: cfg.linewidth, max: cfg.detuning_max },
        coupling: CouplingDist::LogUniform { min: cfg.coupling_min, max: 1.0 },
        g_ref: None,
        sampling: Sampling::Stratified,
        seed,
    };
    let ens = sample_ensemble(&spec)?;
    let dt = step_for(cfg.bandwidth, cfg.detuning_max);
    let sc = SimConfig { echo_half_window: 0.5 * cfg.spacing, ..SimConfig::new(dt).with_decimation(cfg.decimation) };
    let sim = simulate(&sched, &ens, &sc)?;

    let rows: Vec<RetrievedRow> = sim
        .echoes
        .iter()
        .map(|e| {
            let ex = &excitations[e.predicted.source];
            let expected = expected_echo_phase(ex.phase, inverted_at(&sched, ex.center));
            RetrievedRow {
                source: e.predicted.source,
                input_phase: ex.phase,
                expected_phase: expected,
                t_predicted: e.predicted.time,
                t_center: e.record.center,
                amplitude: e.record.amplitude,
                phase: e.record.phase,
                phase_error: phase_distance(e.record.phase, expected),
                found: e.record.found(),
            }
        })
        .collect();
    let mut found: Vec<&RetrievedRow> = rows.iter().filter(|r| r.found).collect();
    found.sort_by(|x, y| x.t_center.total_cmp(&y.t_center));
    let order = found.iter().map(|r| r.source).collect();
    let max_phase_error = found.iter().map(|r| r.phase_error).fold(0.0, f64::max);
    let summary = FifoSummary { schema: SUMMARY_SCHEMA, n_spins: cfg.n_spins, rows, order, max_phase_error, max_norm_drift: sim.max_norm_drift };
    Ok(FifoRun { summary, sim, decimation: cfg.decimation })
}

impl FifoRun {
    pub fn write(&self, b: &mut Bundle) -> Result<()> {
        write_run(b, "", &self.sim, self.decimation)?;
        b.json("summary.json", &self.summary)
    }
}
