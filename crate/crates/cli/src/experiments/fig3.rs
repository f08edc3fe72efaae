// Copyright 2026 The chirpmem Authors
// SPDX-License-Identifier: Apache-2.0

//! Random access across five modes: four excitations written to four modes,
//! read back in a different order with an idle pair of a fifth mode between.
//!
//! Storage loss is not simulated; each retrieved echo is attenuated by
//! η² e^{−t/T_M} and then rescaled back, as done with measured echoes.

use chirpmem::analysis::{rescale_retrieved, EchoRecord};
use chirpmem::ensemble::{sample_ensemble, CouplingDist, DetuningDist, EnsembleSpec, Sampling};
use chirpmem::protocol::{compile_program, default_excitation, format_program, Block, MemoryProgram, ModeRegistry};
use chirpmem::sim::{simulate, SimConfig, SimResult};
use chirpmem::waveforms::WurstParams;
use serde::{Deserialize, Serialize};

use super::abba::{sim_half_window, SpuriousSummary};
use super::{expected_echo_phase, inverted_at, phase_distance, step_for, write_run, SUMMARY_SCHEMA};
use crate::bundle::Bundle;
use crate::error::{CliError, Result};
use crate::quantity::{hz, hz_per_s, rad, seconds};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Fig3Config {
    pub n_spins: usize,
    /// Signed chirp rates of modes A–E.
    #[serde(with = "hz_per_s::list")]
    pub rates: Vec<f64>,
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
    /// Drive phases written to A, B, C and D.
    #[serde(with = "rad::list")]
    pub phases: Vec<f64>,
    pub eta_em: f64,
    #[serde(with = "seconds")]
    pub t_m: f64,
    pub spurious_factor: f64,
    pub decimation: usize,
}

impl Default for Fig3Config {
    fn default() -> Self {
        use std::f64::consts::PI;
        let t = 100e-6;
        Self {
            n_spins: 2000,
            rates: vec![1.2e6 / t, -1.2e6 / t, 2.4e6 / t, -2.4e6 / t, 4.8e6 / t],
            duration: t,
            amplitude: 400e3,
            linewidth: 200e3,
            detuning_max: 400e3,
            coupling_min: 0.5,
            excitation_amplitude: 2e3,
            phases: vec![0.0, 0.5 * PI, PI, 1.5 * PI],
            eta_em: 0.17,
            t_m: 2.0e-3,
            spurious_factor: 5.0,
            decimation: 8,
        }
    }
}

pub const MODE_NAMES: [&str; 5] = ["A", "B", "C", "D", "E"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RetrievalRow {
    pub source: usize,
    pub mode: String,
    pub storage_time: f64,
    pub t_center: f64,
    /// Echo amplitude after the storage envelope, before rescaling.
    pub attenuated: f64,
    pub rescaled: f64,
    pub phase: f64,
    pub expected_phase: f64,
    pub phase_error: f64,
    /// Source whose expected phase is nearest the echo phase.
    pub assigned: usize,
    pub found: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fig3Summary {
    pub schema: u32,
    pub n_spins: usize,
    pub program: String,
    pub rows: Vec<RetrievalRow>,
    pub max_phase_error: f64,
    pub all_assigned: bool,
    pub spurious: SpuriousSummary,
    pub max_norm_drift: f64,
}

pub struct Fig3Run {
    pub summary: Fig3Summary,
    pub sim: SimResult,
    pub decimation: usize,
}

/// W_A W_B W_C W_D R_B I_E R_A R_D I_E R_C.
pub fn program(cfg: &Fig3Config) -> MemoryProgram {
    let w = |m: &str, k: usize| Block::write(m, 1.0, cfg.phases[k]);
    MemoryProgram::new(
        default_excitation(cfg.excitation_amplitude),
        vec![
            w("A", 0),
            w("B", 1),
            w("C", 2),
            w("D", 3),
            Block::read("B"),
            Block::idle("E"),
            Block::read("A"),
            Block::read("D"),
            Block::idle("E"),
            Block::read("C"),
        ],
    )
}

pub fn run(cfg: &Fig3Config, seed: u64) -> Result<Fig3Run> {
    if cfg.rates.len() != MODE_NAMES.len() || cfg.phases.len() != 4 {
        return Err(CliError::config("fig3", "rates/phases", "need five rates and four phases"));
    }
    let mut reg = ModeRegistry::new();
    let mut widest: f64 = 0.0;
    for (name, &r) in MODE_NAMES.iter().zip(&cfg.rates) {
        let p = WurstParams::from_rate(r, cfg.duration, cfg.amplitude)?;
        widest = widest.max(p.bandwidth);
        reg = reg.with(name, p);
    }
    let prog = program(cfg);
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
    let dt = step_for(widest, cfg.detuning_max);
    let sim = simulate(&sched, &ens, &SimConfig::new(dt).with_decimation(cfg.decimation))?;

    let excitations: Vec<_> = sched.excitations().map(|(id, p)| (id, *p)).collect();
    let expected: Vec<f64> = excitations
        .iter()
        .map(|(_, p)| expected_echo_phase(p.phase, inverted_at(&sched, p.center)))
        .collect();
    let mut rows = Vec::new();
    for e in &sim.echoes {
        let ex = &excitations.iter().find(|(id, _)| *id == e.predicted.source).expect("echo source is an excitation").1;
        let storage = e.predicted.time - ex.center;
        let envelope = cfg.eta_em * cfg.eta_em * (-storage / cfg.t_m).exp();
        let attenuated = EchoRecord { amplitude: e.record.amplitude * envelope, ..e.record };
        let z = rescale_retrieved(&attenuated, cfg.eta_em, cfg.t_m, storage)?;
        let phase = z.arg();
        let assigned = (0..expected.len())
            .min_by(|&i, &j| phase_distance(phase, expected[i]).total_cmp(&phase_distance(phase, expected[j])))
            .expect("at least one excitation");
        rows.push(RetrievalRow {
            source: e.predicted.source,
            mode: e.predicted.mode.clone(),
            storage_time: storage,
            t_center: e.record.center,
            attenuated: attenuated.amplitude,
            rescaled: z.norm(),
            phase,
            expected_phase: expected[e.predicted.source],
            phase_error: phase_distance(phase, expected[e.predicted.source]),
            assigned,
            found: e.record.found(),
        });
    }
    let found: Vec<&RetrievalRow> = rows.iter().filter(|r| r.found).collect();
    let raw: Vec<f64> = sim.echoes.iter().filter(|e| e.record.found()).map(|e| e.record.amplitude).collect();
    let reference = raw.iter().sum::<f64>() / raw.len().max(1) as f64;
    let report = sim.spurious(cfg.n_spins, reference, cfg.spurious_factor, sim_half_window());
    let summary = Fig3Summary {
        schema: SUMMARY_SCHEMA,
        n_spins: cfg.n_spins,
        program: format_program(&prog),
        max_phase_error: found.iter().map(|r| r.phase_error).fold(0.0, f64::max),
        all_assigned: found.len() == excitations.len() && rows.iter().all(|r| r.assigned == r.source),
        rows,
        spurious: SpuriousSummary::from_report(&report),
        max_norm_drift: sim.max_norm_drift,
    };
    Ok(Fig3Run { summary, sim, decimation: cfg.decimation })
}

impl Fig3Run {
    pub fn write(&self, b: &mut Bundle) -> Result<()> {
        write_run(b, "", &self.sim, self.decimation)?;
        b.write_bytes("program.txt", self.summary.program.as_bytes())?;
        b.json("summary.json", &self.summary)
    }
}
