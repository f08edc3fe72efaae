// Copyright 2026 The chirpmem Authors
// SPDX-License-Identifier: Apache-2.0

//! Pair-of-WURSTs recovery: χ = echo peak / prepared coherence, against the
//! inhomogeneous linewidth γ. The bundle also carries the ABBA run.
//!
//! The coherence is prepared by an instantaneous small rotation at t = 0, so
//! no spin dephases during the excitation itself.

use chirpmem::ensemble::{hard_pulse, sample_ensemble, CouplingDist, DetuningDist, EnsembleSpec, EnsembleState, Sampling};
use chirpmem::protocol::{build_inversion_study, default_excitation, default_tau, EventKind, ModeRegistry};
use chirpmem::sim::{simulate_from, SimConfig, SimResult};
use chirpmem::waveforms::{ChirpSign, GaussianParams, WurstParams};
use serde::{Deserialize, Serialize};

use super::abba::{self, AbbaConfig, AbbaRun};
use super::{peak_near, step_for, write_run, SUMMARY_SCHEMA};
use crate::bundle::Bundle;
use crate::error::Result;
use crate::quantity::{hz, rad, seconds};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Fig2Config {
    pub n_spins: usize,
    #[serde(with = "hz")]
    pub bandwidth: f64,
    #[serde(with = "seconds")]
    pub duration: f64,
    #[serde(with = "hz")]
    pub amplitude: f64,
    /// Gaussian FWHM values γ.
    #[serde(with = "hz::list")]
    pub linewidths: Vec<f64>,
    /// Detuning truncation in units of γ.
    pub truncation: f64,
    /// Tip angle of the prepared coherence.
    #[serde(with = "rad")]
    pub tip_angle: f64,
    #[serde(with = "seconds")]
    pub search_half_width: f64,
    pub decimation: usize,
    /// Linewidth whose trace is exported.
    #[serde(with = "hz")]
    pub trace_linewidth: f64,
    pub abba: AbbaConfig,
}

impl Default for Fig2Config {
    fn default() -> Self {
        Self {
            n_spins: 2000,
            bandwidth: 0.5e6,
            duration: 100e-6,
            amplitude: 100e3,
            linewidths: vec![25e3, 50e3, 100e3, 200e3, 300e3, 500e3, 800e3, 1.2e6],
            truncation: 3.0,
            tip_angle: 0.05,
            search_half_width: 20e-6,
            decimation: 8,
            trace_linewidth: 100e3,
            abba: AbbaConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChiRow {
    pub linewidth: f64,
    pub chi: f64,
    /// Gaussian-fit amplitude over the prepared coherence.
    pub chi_fit: f64,
    pub echo_time: f64,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fig2Summary {
    pub schema: u32,
    pub n_spins: usize,
    pub bandwidth: f64,
    pub rows: Vec<ChiRow>,
    pub abba: abba::AbbaSummary,
}

pub struct Fig2Run {
    pub summary: Fig2Summary,
    pub trace: Option<SimResult>,
    pub abba: AbbaRun,
    pub decimation: usize,
}

pub fn run(cfg: &Fig2Config, seed: u64) -> Result<Fig2Run> {
    let a = WurstParams::new(cfg.bandwidth, cfg.duration, cfg.amplitude, ChirpSign::Up)?;
    let reg = ModeRegistry::new().with("A", a);
    let ex = GaussianParams { center: 0.0, ..default_excitation(0.0) };
    let tau = default_tau(cfg.duration, ex.duration);
    let mut sched = build_inversion_study(0, tau, &reg, &ex)?;
    sched.events.retain(|e| !matches!(e.kind, EventKind::Excitation { .. }));
    let echo_time = sched.predicted_echoes[0].time;

    let mut rows = Vec::new();
    let mut trace = None;
    for &gamma in &cfg.linewidths {
        let dmax = cfg.truncation * gamma;
        let spec = EnsembleSpec {
            n_spins: cfg.n_spins,
            detuning: DetuningDist::Gaussian { fwhm: gamma, max: dmax },
            coupling: CouplingDist::Constant { g: 1.0 },
            g_ref: None,
            sampling: Sampling::Stratified,
            seed,
        };
        let ens = sample_ensemble(&spec)?;
        let mut init = EnsembleState::ground(ens.len());
        hard_pulse(&mut init, &ens, cfg.tip_angle, 0.0, true);
        let p0 = init.polarization(&ens).norm();
        let dt = step_for(cfg.bandwidth, dmax);
        let sc = SimConfig { t_start: Some(0.0), ..SimConfig::new(dt).with_decimation(cfg.decimation) };
        let r = simulate_from(&sched, &ens, &init, &sc)?;
        let (_, peak) = peak_near(&r.polarization, echo_time, cfg.search_half_width);
        let rec = r.echo_at(echo_time, cfg.search_half_width)?;
        rows.push(ChiRow { linewidth: gamma, chi: peak / p0, chi_fit: rec.amplitude / p0, echo_time, dt });
        if gamma == cfg.trace_linewidth {
            trace = Some(r);
        }
    }
    let abba = abba::run(&cfg.abba, seed)?;
    let summary = Fig2Summary {
        schema: SUMMARY_SCHEMA,
        n_spins: cfg.n_spins,
        bandwidth: cfg.bandwidth,
        rows,
        abba: abba.summary.clone(),
    };
    Ok(Fig2Run { summary, trace, abba, decimation: cfg.decimation })
}

impl Fig2Run {
    pub fn write(&self, b: &mut Bundle) -> Result<()> {
        let rows: Vec<Vec<f64>> =
            self.summary.rows.iter().map(|r| vec![r.linewidth, r.chi, r.chi_fit, r.echo_time]).collect();
        b.table("chi.csv", &["linewidth", "chi", "chi_fit", "t_echo"], &rows)?;
        if let Some(t) = &self.trace {
            write_run(b, "pair_", t, self.decimation)?;
        }
        self.abba.write(b, "abba_")?;
        b.json("summary.json", &self.summary)
    }
}
