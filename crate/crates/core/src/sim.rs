// Copyright 2026 The chirpmem Authors
// SPDX-License-Identifier: Apache-2.0

//! End-to-end simulation of a compiled pulse schedule.
//!
//! schedule → drive timeline → (cavity) → spin ensemble → polarization and
//! emitted trace → echo records at the predicted times.
//!
//! Echoes are measured on the raw collective coherence Σ wᵢ g₀ᵢ mᵢ(t), which
//! carries no cavity group delay; the cavity-filtered emission is returned
//! alongside as the detectable trace.

use serde::{Deserialize, Serialize};

use crate::analysis::{dephased_floor, extract_echo, spurious_peaks, EchoOptions, EchoRecord};
use crate::cavity::{cavity_filter, intracavity_drive, ResonatorParams};
use crate::ensemble::{propagate, EnsembleState, PropagateOptions, SpinEnsemble};
use crate::protocol::{EventKind, PredictedEcho, PulseSchedule};
use crate::waveforms::{gaussian_pulse, render_timeline, wurst_pulse, TimeGrid, Waveform};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Drive sampling period (s).
    pub dt: f64,
    pub decimation: usize,
    /// Resonator; `None` drives the spins with the bare waveform and
    /// reports the polarization as the trace.
    pub resonator: Option<ResonatorParams>,
    /// Free time simulated before the first and after the last event (s).
    pub padding: f64,
    /// Time after each event excluded from the listen regions (s).
    pub guard: f64,
    /// Half width of the echo fit window around a predicted echo (s).
    pub echo_half_window: f64,
    /// Grid start overriding the padded schedule span; the initial state is
    /// taken to hold at this time.
    #[serde(default)]
    pub t_start: Option<f64>,
    /// Grid end, when later than the padded schedule span.
    #[serde(default)]
    pub t_end: Option<f64>,
}

impl SimConfig {
    pub fn new(dt: f64) -> Self {
        Self { dt, decimation: 1, resonator: None, padding: 20e-6, guard: 4e-6, echo_half_window: 8e-6, t_start: None, t_end: None }
    }

    pub fn with_resonator(mut self, r: ResonatorParams) -> Self {
        self.resonator = Some(r);
        self
    }

    pub fn with_decimation(mut self, d: usize) -> Self {
        self.decimation = d;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EchoResult {
    pub predicted: PredictedEcho,
    pub record: EchoRecord,
}

#[derive(Debug, Clone)]
pub struct SimResult {
    /// Input drive on the simulation grid (Hz).
    pub drive: Waveform,
    /// Collective coherence Σ wᵢ g₀ᵢ mᵢ on the recording grid.
    pub polarization: Waveform,
    /// Cavity-filtered emission (equal to `polarization` without a resonator).
    pub trace: Waveform,
    pub final_state: EnsembleState,
    pub echoes: Vec<EchoResult>,
    /// Intervals free of pulses and excitations, trimmed by the guard.
    pub listen: Vec<(f64, f64)>,
    pub max_norm_drift: f64,
}

/// Peaks in the listen regions outside every predicted echo window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpuriousReport {
    /// 3/√n of the reference echo amplitude.
    pub floor: f64,
    pub threshold: f64,
    pub peaks: Vec<(f64, f64)>,
}

impl SimResult {
    pub fn echo_for(&self, source: usize) -> Option<&EchoResult> {
        self.echoes.iter().find(|e| e.predicted.source == source)
    }

    /// Fits an echo in `[t - half, t + half]` on the polarization.
    pub fn echo_at(&self, t: f64, half: f64) -> Result<EchoRecord> {
        extract_echo(&self.polarization, t - half, t + half, EchoOptions::default())
    }

    /// Peaks above `factor` × the dephased floor outside predicted windows.
    pub fn spurious(&self, n_spins: usize, reference: f64, factor: f64, half_window: f64) -> SpuriousReport {
        let floor = dephased_floor(n_spins, reference);
        let threshold = factor * floor;
        let g = &self.polarization.grid;
        let mut excluded: Vec<(f64, f64)> = self
            .echoes
            .iter()
            .map(|e| (e.predicted.time - half_window, e.predicted.time + half_window))
            .collect();
        // Everything outside the listen regions is excluded as well.
        let mut cursor = g.t_start - g.dt;
        for &(a, b) in &self.listen {
            excluded.push((cursor, a));
            cursor = b;
        }
        excluded.push((cursor, g.t_end() + g.dt));
        SpuriousReport { floor, threshold, peaks: spurious_peaks(&self.polarization, &excluded, threshold) }
    }
}

/// Simulation grid covering the schedule plus padding.
pub fn schedule_grid(schedule: &PulseSchedule, cfg: &SimConfig) -> Result<TimeGrid> {
    let (lo, hi) = schedule.span().unwrap_or((0.0, 0.0));
    let start = match cfg.t_start {
        Some(t) if t > lo => return Err(Error::invalid("t_start", format!("{t:e} s is after the first event at {lo:e} s"))),
        Some(t) => t,
        None => lo - cfg.padding,
    };
    let end = cfg.t_end.map_or(hi + cfg.padding, |t| t.max(hi + cfg.padding));
    TimeGrid::aligned(start, cfg.dt, start, end)
}

/// Drive timeline of all schedule events on `grid`.
pub fn render_schedule(schedule: &PulseSchedule, grid: &TimeGrid) -> Result<Waveform> {
    let mut events = Vec::with_capacity(schedule.events.len());
    for e in &schedule.events {
        let w = match &e.kind {
            EventKind::Wurst { params, .. } => wurst_pulse(params, grid.t_start, grid.dt)?,
            EventKind::Excitation { params, .. } => gaussian_pulse(params, grid.t_start, grid.dt)?,
        };
        events.push(w);
    }
    events.sort_by(|a, b| a.grid.t_start.total_cmp(&b.grid.t_start));
    render_timeline(&events, Some(grid))
}

/// Gaps between event windows, each trimmed by `guard` after the preceding
/// event. The region before the first event is not a listen region.
pub fn listen_regions(schedule: &PulseSchedule, grid: &TimeGrid, guard: f64) -> Vec<(f64, f64)> {
    let mut windows: Vec<(f64, f64)> = schedule.events.iter().map(|e| e.window()).collect();
    windows.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out = Vec::new();
    for (k, w) in windows.iter().enumerate() {
        let start = w.1 + guard;
        let end = windows.get(k + 1).map_or(grid.t_end(), |n| n.0);
        if end > start {
            out.push((start, end));
        }
    }
    out
}

/// Runs `schedule` on `ens` starting from `initial`.
pub fn simulate_from(
    schedule: &PulseSchedule,
    ens: &SpinEnsemble,
    initial: &EnsembleState,
    cfg: &SimConfig,
) -> Result<SimResult> {
    if cfg.guard < 0.0 || cfg.padding < 0.0 || !(cfg.echo_half_window > 0.0) {
        return Err(Error::invalid("sim config", "padding and guard must be non-negative, echo window positive"));
    }
    let grid = schedule_grid(schedule, cfg)?;
    let drive = render_schedule(schedule, &grid)?;
    let spin_drive = match &cfg.resonator {
        Some(r) => intracavity_drive(&drive, r)?,
        None => drive.clone(),
    };
    let prop = propagate(initial, &spin_drive, ens, PropagateOptions { decimation: cfg.decimation, record_trajectory: false })?;
    let trace = match &cfg.resonator {
        Some(r) => cavity_filter(&prop.polarization, r)?,
        None => prop.polarization.clone(),
    };
    let listen = listen_regions(schedule, &prop.polarization.grid, cfg.guard);
    let mut echoes = Vec::with_capacity(schedule.predicted_echoes.len());
    for p in &schedule.predicted_echoes {
        // Clip the fit window to the listen region holding the prediction.
        let (mut a, mut b) = (p.time - cfg.echo_half_window, p.time + cfg.echo_half_window);
        if let Some(&(la, lb)) = listen.iter().find(|(la, lb)| p.time >= *la && p.time <= *lb) {
            a = a.max(la);
            b = b.min(lb);
        }
        let record = extract_echo(&prop.polarization, a, b, EchoOptions::default())?;
        echoes.push(EchoResult { predicted: p.clone(), record });
    }
    Ok(SimResult {
        drive,
        polarization: prop.polarization,
        trace,
        final_state: prop.final_state,
        echoes,
        listen,
        max_norm_drift: prop.max_norm_drift,
    })
}

/// Runs `schedule` on a ground-state ensemble.
pub fn simulate(schedule: &PulseSchedule, ens: &SpinEnsemble, cfg: &SimConfig) -> Result<SimResult> {
    simulate_from(schedule, ens, &EnsembleState::ground(ens.len()), cfg)
}
