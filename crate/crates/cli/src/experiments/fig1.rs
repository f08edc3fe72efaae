// Copyright 2026 The chirpmem Authors
// SPDX-License-Identifier: Apache-2.0

//! Silenced first refocus and loud second echo of an identical WURST pair,
//! plus the echo after `n_inv` preparatory inversions.
//!
//! Layout: excitation at 0, pulses at τ and 3τ. The refocus at 2τ carries
//! the quadratic phase of a single chirp; the echo at 4τ is phase-corrected.

use chirpmem::ensemble::{sample_ensemble, CouplingDist, DetuningDist, EnsembleSpec, Sampling};
use chirpmem::protocol::{build_inversion_study, default_excitation, default_tau, ModeRegistry};
use chirpmem::sim::{simulate, SimConfig, SimResult};
use chirpmem::waveforms::{GaussianParams, WurstParams};
use serde::{Deserialize, Serialize};

use super::{peak_near, step_for, write_run, SUMMARY_SCHEMA};
use crate::bundle::Bundle;
use crate::error::Result;
use crate::quantity::{hz, hz_per_s, seconds};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Fig1Config {
    pub n_spins: usize,
    #[serde(with = "hz_per_s")]
    pub rate: f64,
    #[serde(with = "seconds")]
    pub duration: f64,
    #[serde(with = "hz")]
    pub amplitude: f64,
    /// Lorentzian FWHM γ.
    #[serde(with = "hz")]
    pub linewidth: f64,
    #[serde(with = "hz")]
    pub detuning_max: f64,
    /// Smallest relative coupling; the largest is 1.
    pub coupling_min: f64,
    #[serde(with = "hz")]
    pub excitation_amplitude: f64,
    /// Half width of the peak search around each refocus.
    #[serde(with = "seconds")]
    pub search_half_width: f64,
    pub decimation: usize,
    /// Spins for the inversion study runs.
    pub inversion_spins: usize,
    /// Largest number of preparatory inversions.
    pub inversion_max: usize,
}

impl Default for Fig1Config {
    fn default() -> Self {
        Self {
            n_spins: 10_000,
            rate: 20e9,
            duration: 200e-6,
            amplitude: 500e3,
            linewidth: 100e3,
            detuning_max: 500e3,
            coupling_min: 0.5,
            excitation_amplitude: 2e3,
            search_half_width: 6e-6,
            decimation: 8,
            inversion_spins: 1000,
            inversion_max: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InversionRow {
    pub n_inv: usize,
    pub ground_state_parity: i32,
    pub echo_time: f64,
    pub amplitude: f64,
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fig1Summary {
    pub schema: u32,
    pub n_spins: usize,
    pub dt: f64,
    pub tau: f64,
    pub first_refocus_time: f64,
    pub echo_time: f64,
    /// Largest |P| near the first refocus.
    pub silenced_peak: f64,
    /// Largest |P| near the two-pulse echo.
    pub echo_peak: f64,
    pub silenced_ratio: f64,
    pub echo_fit_amplitude: f64,
    pub echo_fit_center: f64,
    pub echo_phase: f64,
    pub max_norm_drift: f64,
    pub inversion: Vec<InversionRow>,
}

pub struct Fig1Run {
    pub summary: Fig1Summary,
    pub sim: SimResult,
    pub decimation: usize,
}

impl Fig1Config {
    fn pulse(&self) -> Result<WurstParams> {
        Ok(WurstParams::from_rate(self.rate, self.duration, self.amplitude)?)
    }

    fn ensemble(&self, n: usize, seed: u64) -> EnsembleSpec {
        EnsembleSpec {
            n_spins: n,
            detuning: DetuningDist::Lorentzian { fwhm: self.linewidth, max: self.detuning_max },
            coupling: CouplingDist::LogUniform { min: self.coupling_min, max: 1.0 },
            g_ref: None,
            sampling: Sampling::Stratified,
            seed,
        }
    }

    fn excitation(&self) -> GaussianParams {
        GaussianParams { center: 0.0, ..default_excitation(self.excitation_amplitude) }
    }
}

pub fn run(cfg: &Fig1Config, seed: u64) -> Result<Fig1Run> {
    let a = cfg.pulse()?;
    let reg = ModeRegistry::new().with("A", a);
    let ex = cfg.excitation();
    let tau = default_tau(cfg.duration, ex.duration);
    let dt = step_for(a.bandwidth, cfg.detuning_max);

    let ens = sample_ensemble(&cfg.ensemble(cfg.n_spins, seed))?;
    let sched = build_inversion_study(0, tau, &reg, &ex)?;
    let sim = simulate(&sched, &ens, &SimConfig::new(dt).with_decimation(cfg.decimation))?;
    let first = 2.0 * tau;
    let echo = sched.predicted_echoes[0].time;
    let (_, silenced_peak) = peak_near(&sim.polarization, first, cfg.search_half_width);
    let (_, echo_peak) = peak_near(&sim.polarization, echo, cfg.search_half_width);
    let rec = sim.echoes[0].record;

    let small = sample_ensemble(&cfg.ensemble(cfg.inversion_spins, seed))?;
    let mut inversion = Vec::new();
    for n_inv in 0..=cfg.inversion_max {
        let s = build_inversion_study(n_inv, tau, &reg, &ex)?;
        let r = simulate(&s, &small, &SimConfig::new(dt).with_decimation(cfg.decimation))?;
        let e = &r.echoes[0];
        inversion.push(InversionRow {
            n_inv,
            ground_state_parity: s.ground_state_parity,
            echo_time: e.predicted.time,
            amplitude: e.record.amplitude,
            phase: e.record.phase,
        });
    }

    let summary = Fig1Summary {
        schema: SUMMARY_SCHEMA,
        n_spins: cfg.n_spins,
        dt,
        tau,
        first_refocus_time: first,
        echo_time: echo,
        silenced_peak,
        echo_peak,
        silenced_ratio: silenced_peak / echo_peak,
        echo_fit_amplitude: rec.amplitude,
        echo_fit_center: rec.center,
        echo_phase: rec.phase,
        max_norm_drift: sim.max_norm_drift,
        inversion,
    };
    Ok(Fig1Run { summary, sim, decimation: cfg.decimation })
}

impl Fig1Run {
    pub fn write(&self, b: &mut Bundle) -> Result<()> {
        write_run(b, "", &self.sim, self.decimation)?;
        let rows: Vec<Vec<f64>> = self
            .summary
            .inversion
            .iter()
            .map(|r| vec![r.n_inv as f64, r.ground_state_parity as f64, r.echo_time, r.amplitude, r.phase])
            .collect();
        b.table("inversion.csv", &["n_inv", "parity", "t_echo", "amplitude", "phase"], &rows)?;
        b.json("summary.json", &self.summary)
    }
}
