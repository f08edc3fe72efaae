// Copyright 2026 The chirpmem Authors
// SPDX-License-Identifier: Apache-2.0

//! ABBA random access: α stored with A, β with B, β read back with B before α
//! with A. Only the reads echo; the nested order puts E_β ahead of E_α.

use chirpmem::ensemble::{sample_ensemble, CouplingDist, DetuningDist, EnsembleSpec, Sampling};
use chirpmem::protocol::{compile_program, default_excitation, Block, MemoryProgram, ModeRegistry};
use chirpmem::sim::{simulate, SimConfig, SimResult, SpuriousReport};
use chirpmem::waveforms::WurstParams;
use serde::{Deserialize, Serialize};

use super::{step_for, write_run, SUMMARY_SCHEMA};
use crate::bundle::Bundle;
use crate::error::Result;
use crate::quantity::{hz, hz_per_s, rad, seconds};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AbbaConfig {
    pub n_spins: usize,
    #[serde(with = "hz_per_s")]
    pub rate_a: f64,
    #[serde(with = "hz_per_s")]
    pub rate_b: f64,
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
    #[serde(with = "rad")]
    pub phase_alpha: f64,
    #[serde(with = "rad")]
    pub phase_beta: f64,
    /// Multiple of the dephased floor above which a peak is spurious.
    pub spurious_factor: f64,
    pub decimation: usize,
}

impl Default for AbbaConfig {
    fn default() -> Self {
        Self {
            n_spins: 4000,
            rate_a: -11.25e9,
            rate_b: 7.5e9,
            duration: 100e-6,
            amplitude: 200e3,
            linewidth: 100e3,
            detuning_max: 200e3,
            coupling_min: 0.7,
            excitation_amplitude: 2e3,
            phase_alpha: 0.0,
            phase_beta: std::f64::consts::FRAC_PI_2,
            spurious_factor: 5.0,
            decimation: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EchoRow {
    pub source: usize,
    pub mode: String,
    pub t_predicted: f64,
    pub t_center: f64,
    pub amplitude: f64,
    pub phase: f64,
    pub found: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpuriousSummary {
    pub floor: f64,
    pub threshold: f64,
    pub count: usize,
    /// Largest spurious peak over the floor, 0 when there is none.
    pub max_over_floor: f64,
}

impl SpuriousSummary {
    pub fn from_report(r: &SpuriousReport) -> Self {
        let max = r.peaks.iter().map(|p| p.1).fold(0.0, f64::max);
        Self { floor: r.floor, threshold: r.threshold, count: r.peaks.len(), max_over_floor: max / r.floor }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AbbaSummary {
    pub schema: u32,
    pub n_spins: usize,
    pub echoes: Vec<EchoRow>,
    /// Sources in order of echo time.
    pub order: Vec<usize>,
    pub spurious: SpuriousSummary,
    pub max_norm_drift: f64,
}

pub struct AbbaRun {
    pub summary: AbbaSummary,
    pub sim: SimResult,
    pub decimation: usize,
}

pub fn run(cfg: &AbbaConfig, seed: u64) -> Result<AbbaRun> {
    let a = WurstParams::from_rate(cfg.rate_a, cfg.duration, cfg.amplitude)?;
    let b = WurstParams::from_rate(cfg.rate_b, cfg.duration, cfg.amplitude)?;
    let reg = ModeRegistry::new().with("A", a).with("B", b);
    let prog = MemoryProgram::new(
        default_excitation(cfg.excitation_amplitude),
        vec![
            Block::write("A", 1.0, cfg.phase_alpha),
            Block::write("B", 1.0, cfg.phase_beta),
            Block::read("B"),
            Block::read("A"),
        ],
    );
    let sched = compile_program(&prog, &reg)?;
    let spec = EnsembleSpec {
        n_spins: cfg.n_spins,
        detuning: DetuningDist::Lorentzian { fwhm: cfg.linewidth, max: cfg.detuning_max },
        coupling: CouplingDist::LogUniform { min: cfg.coupling_min, max: 1.0 },
        g_ref: None,
        sampling: Sampling::Stratified,
        seed,
    };
    let ens = sample_ensemble(&spec)?;
    let dt = step_for(a.bandwidth.max(b.bandwidth), cfg.detuning_max);
    let sim = simulate(&sched, &ens, &SimConfig::new(dt).with_decimation(cfg.decimation))?;

    let echoes: Vec<EchoRow> = sim
        .echoes
        .iter()
        .map(|e| EchoRow {
            source: e.predicted.source,
            mode: e.predicted.mode.clone(),
            t_predicted: e.predicted.time,
            t_center: e.record.center,
            amplitude: e.record.amplitude,
            phase: e.record.phase,
            found: e.record.found(),
        })
        .collect();
    let mut found: Vec<&EchoRow> = echoes.iter().filter(|e| e.found).collect();
    found.sort_by(|x, y| x.t_center.total_cmp(&y.t_center));
    let order = found.iter().map(|e| e.source).collect();
    let reference = found.iter().map(|e| e.amplitude).sum::<f64>() / found.len().max(1) as f64;
    let report = sim.spurious(cfg.n_spins, reference, cfg.spurious_factor, sim_half_window());
    let summary = AbbaSummary {
        schema: SUMMARY_SCHEMA,
        n_spins: cfg.n_spins,
        echoes,
        order,
        spurious: SpuriousSummary::from_report(&report),
        max_norm_drift: sim.max_norm_drift,
    };
    Ok(AbbaRun { summary, sim, decimation: cfg.decimation })
}

/// Half width around each predicted echo excluded from the spurious search.
pub fn sim_half_window() -> f64 {
    SimConfig::new(1.0).echo_half_window
}

impl AbbaRun {
    pub fn write(&self, b: &mut Bundle, prefix: &str) -> Result<()> {
        write_run(b, prefix, &self.sim, self.decimation)
    }
}
