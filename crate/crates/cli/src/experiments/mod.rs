// Copyright 2026 The chirpmem Authors
// SPDX-License-Identifier: Apache-2.0

//! Canned reproductions. Each submodule pairs a config (defaults are the
//! canned values; any subset may be overridden from TOML) with a `run`
//! returning a serializable summary and a bundle writer.

pub mod abba;
pub mod fifo;
pub mod fig1;
pub mod fig2;
pub mod fig2e;
pub mod fig3;
pub mod fig4;
pub mod oracle;

use chirpmem::sim::{EchoResult, SimResult};
use chirpmem::waveforms::Waveform;
use chirpmem::Complex64;

use crate::bundle::Bundle;
use crate::error::Result;

/// Version tag shared by every summary JSON.
pub const SUMMARY_SCHEMA: u32 = 1;

/// Step resolving both the swept band and the detuning extremes.
pub fn step_for(bandwidth: f64, detuning_max: f64) -> f64 {
    1.0 / (40.0 * bandwidth.max(2.0 * detuning_max))
}

/// Every `d`-th sample of `w`.
pub fn decimate(w: &Waveform, d: usize) -> Waveform {
    if d <= 1 {
        return w.clone();
    }
    let samples: Vec<Complex64> = w.samples.iter().step_by(d).copied().collect();
    let grid = chirpmem::waveforms::TimeGrid::new(w.grid.t_start, w.grid.dt * d as f64, samples.len())
        .expect("decimated grid is valid");
    Waveform::from_samples(grid, samples).expect("lengths match")
}

/// Largest |z| in `[t - half, t + half]` and its time.
pub fn peak_near(w: &Waveform, t: f64, half: f64) -> (f64, f64) {
    let g = &w.grid;
    let (i0, i1) = (g.nearest_index(t - half), g.nearest_index(t + half));
    let (i, v) = (i0..=i1).map(|i| (i, w.samples[i].norm())).fold((i0, 0.0), |a, b| if b.1 > a.1 { b } else { a });
    (g.time(i), v)
}

pub const ECHO_COLUMNS: [&str; 8] =
    ["source", "after_pulse", "t_predicted", "t_center", "amplitude", "phase", "width", "found"];

pub fn echo_rows(echoes: &[EchoResult]) -> Vec<Vec<f64>> {
    echoes
        .iter()
        .map(|e| {
            vec![
                e.predicted.source as f64,
                e.predicted.after_pulse as f64,
                e.predicted.time,
                e.record.center,
                e.record.amplitude,
                e.record.phase,
                e.record.width,
                if e.record.found() { 1.0 } else { 0.0 },
            ]
        })
        .collect()
}

/// Drive, polarization and echo table of one simulation under `prefix`.
pub fn write_run(b: &mut Bundle, prefix: &str, r: &SimResult, decimation: usize) -> Result<()> {
    use chirpmem::io::SeriesKind;
    b.series(&format!("{prefix}drive.csv"), &decimate(&r.drive, decimation), SeriesKind::Waveform)?;
    b.series(&format!("{prefix}trace.csv"), &r.polarization, SeriesKind::Trace)?;
    if r.trace != r.polarization {
        b.series(&format!("{prefix}emission.csv"), &r.trace, SeriesKind::Trace)?;
    }
    b.table(&format!("{prefix}echoes.csv"), &ECHO_COLUMNS, &echo_rows(&r.echoes))
}

/// |a − b| wrapped to [0, π].
pub fn phase_distance(a: f64, b: f64) -> f64 {
    chirpmem::analysis::wrap_phase(a - b).abs()
}

/// Whether the ensemble is inverted at time `t` of schedule `s`: the ground
/// state parity flipped once per pulse centered before `t`.
pub fn inverted_at(s: &chirpmem::protocol::PulseSchedule, t: f64) -> bool {
    let before = s.pulses().filter(|(_, p)| p.center < t).count();
    (s.ground_state_parity < 0) != (before % 2 == 1)
}

/// Echo phase of a coherence written by a weak drive of `drive_phase`.
pub fn expected_echo_phase(drive_phase: f64, inverted: bool) -> f64 {
    let base = chirpmem::ensemble::excitation_coherence_phase(drive_phase);
    chirpmem::analysis::wrap_phase(if inverted { base + std::f64::consts::PI } else { base })
}
