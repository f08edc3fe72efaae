// Copyright 2026 The chirpmem Authors
// SPDX-License-Identifier: Apache-2.0

//! Inhomogeneous spin ensemble: sampling, propagation under a drive, the
//! adiabatic-limit phase oracle and the collectively emitted signal.
//!
//! A spin with detuning δ (Hz) and coupling g₀ is a Bloch vector S evolving as
//! `dS/dt = W × S` with `W = 2π(s·Re d, s·Im d, δ)`, where `d(t)` is the drive
//! in Hz of Rabi frequency and `s = g₀/g_ref`. The transverse coherence
//! `m = sx + i·sy` precesses freely as `exp(i2πδt)`.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::cavity::{intracavity_drive, ResonatorParams};
use crate::fit::linear_regression;
use crate::rk4;
use crate::waveforms::{TimeGrid, Waveform, WurstParams};
use crate::{Error, Result};

/// Spins per work unit. Fixed so the reduction order never depends on the
/// number of worker threads.
pub const CHUNK: usize = 256;

/// Per-spin limit on |S| drift over a run.
pub const NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DetuningDist {
    /// Lorentzian of FWHM `fwhm`, truncated at ±`max`.
    Lorentzian { fwhm: f64, max: f64 },
    /// Gaussian of FWHM `fwhm`, truncated at ±`max`.
    Gaussian { fwhm: f64, max: f64 },
}

impl DetuningDist {
    pub fn fwhm(&self) -> f64 {
        match *self {
            DetuningDist::Lorentzian { fwhm, .. } | DetuningDist::Gaussian { fwhm, .. } => fwhm,
        }
    }

    pub fn max(&self) -> f64 {
        match *self {
            DetuningDist::Lorentzian { max, .. } | DetuningDist::Gaussian { max, .. } => max,
        }
    }

    fn validate(&self) -> Result<()> {
        let (fwhm, max) = (self.fwhm(), self.max());
        if !(fwhm > 0.0 && fwhm.is_finite()) {
            return Err(Error::invalid("detuning.fwhm", format!("must be positive, got {fwhm}")));
        }
        if !(max >= fwhm) {
            return Err(Error::invalid("detuning.max", format!("must be >= fwhm ({fwhm}), got {max}")));
        }
        Ok(())
    }

    /// Inverse CDF of the truncated distribution, `u` in (0, 1).
    fn quantile(&self, u: f64) -> f64 {
        match *self {
            DetuningDist::Lorentzian { fwhm, max } => {
                let hw = 0.5 * fwhm;
                hw * ((2.0 * u - 1.0) * (max / hw).atan()).tan()
            }
            DetuningDist::Gaussian { fwhm, max } => {
                let sigma = fwhm / (8.0 * 2f64.ln()).sqrt();
                let n = Normal::standard();
                let lo = n.cdf(-max / sigma);
                let hi = n.cdf(max / sigma);
                sigma * n.inverse_cdf(lo + u * (hi - lo))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CouplingDist {
    Constant { g: f64 },
    /// Uniform in ln g over [min, max].
    LogUniform { min: f64, max: f64 },
}

impl CouplingDist {
    fn validate(&self) -> Result<()> {
        match *self {
            CouplingDist::Constant { g } if g > 0.0 && g.is_finite() => Ok(()),
            CouplingDist::Constant { g } => Err(Error::invalid("coupling.g", format!("must be positive, got {g}"))),
            CouplingDist::LogUniform { min, max } if min > 0.0 && max >= min && max.is_finite() => Ok(()),
            CouplingDist::LogUniform { min, max } => Err(Error::invalid(
                "coupling",
                format!("log-uniform range needs 0 < min <= max, got [{min}, {max}]"),
            )),
        }
    }

    fn largest(&self) -> f64 {
        match *self {
            CouplingDist::Constant { g } => g,
            CouplingDist::LogUniform { max, .. } => max,
        }
    }

    fn at(&self, u: f64) -> f64 {
        match *self {
            CouplingDist::Constant { g } => g,
            CouplingDist::LogUniform { min, max } => min * (max / min).powf(u),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    /// Detunings at the quantiles (i + ½)/n; couplings on a golden-ratio sequence.
    #[default]
    Stratified,
    Pseudorandom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub n_spins: usize,
    pub detuning: DetuningDist,
    pub coupling: CouplingDist,
    /// Coupling at which the drive amplitude equals the Rabi frequency.
    /// Defaults to the largest coupling of the distribution.
    #[serde(default)]
    pub g_ref: Option<f64>,
    #[serde(default)]
    pub sampling: Sampling,
    #[serde(default)]
    pub seed: u64,
}

impl EnsembleSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_spins == 0 {
            return Err(Error::invalid("n_spins", "must be at least 1"));
        }
        self.detuning.validate()?;
        self.coupling.validate()?;
        if let Some(g) = self.g_ref {
            if !(g > 0.0) {
                return Err(Error::invalid("g_ref", format!("must be positive, got {g}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpinEnsemble {
    /// Detuning per spin (Hz).
    pub delta: Vec<f64>,
    /// Coupling per spin (Hz).
    pub g0: Vec<f64>,
    pub weight: Vec<f64>,
    pub g_ref: f64,
}

impl SpinEnsemble {
    pub fn new(delta: Vec<f64>, g0: Vec<f64>, weight: Vec<f64>, g_ref: f64) -> Result<Self> {
        if delta.len() != g0.len() || delta.len() != weight.len() {
            return Err(Error::invalid("ensemble", "delta, g0 and weight lengths differ"));
        }
        if delta.is_empty() {
            return Err(Error::invalid("ensemble", "no spins"));
        }
        if weight.iter().any(|&w| !(w >= 0.0)) {
            return Err(Error::invalid("weight", "weights must be non-negative"));
        }
        let total: f64 = weight.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("weight", format!("weights sum to {total}, not 1")));
        }
        if !(g_ref > 0.0) {
            return Err(Error::invalid("g_ref", "must be positive"));
        }
        Ok(Self { delta, g0, weight, g_ref })
    }

    /// Equal-weight ensemble with constant coupling.
    pub fn uniform(delta: Vec<f64>, g: f64) -> Result<Self> {
        let n = delta.len();
        Self::new(delta, vec![g; n], vec![1.0 / n as f64; n], g)
    }

    pub fn len(&self) -> usize {
        self.delta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delta.is_empty()
    }

    /// Drive scale g₀/g_ref of spin `i`.
    pub fn scale(&self, i: usize) -> f64 {
        self.g0[i] / self.g_ref
    }

    /// Σ wᵢ g₀ᵢ, the polarization of a fully aligned ensemble.
    pub fn coherent_sum(&self) -> f64 {
        self.weight.iter().zip(&self.g0).map(|(w, g)| w * g).sum()
    }
}

const GOLDEN: f64 = 0.618_033_988_749_894_9;

pub fn sample_ensemble(spec: &EnsembleSpec) -> Result<SpinEnsemble> {
    spec.validate()?;
    let n = spec.n_spins;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (delta, g0) = match spec.sampling {
        Sampling::Stratified => {
            let offset: f64 = rng.random();
            let delta = (0..n).map(|i| spec.detuning.quantile((i as f64 + 0.5) / n as f64)).collect();
            let g0 = (0..n)
                .map(|i| spec.coupling.at((offset + i as f64 * GOLDEN).fract()))
                .collect();
            (delta, g0)
        }
        Sampling::Pseudorandom => {
            let mut delta = Vec::with_capacity(n);
            let mut g0 = Vec::with_capacity(n);
            for _ in 0..n {
                // Open interval keeps the Gaussian quantile finite.
                let u = (rng.random::<f64>() + 0.5 / u32::MAX as f64).min(1.0 - 1e-16);
                delta.push(spec.detuning.quantile(u));
                g0.push(spec.coupling.at(rng.random()));
            }
            (delta, g0)
        }
    };
    let g_ref = spec.g_ref.unwrap_or_else(|| spec.coupling.largest());
    SpinEnsemble::new(delta, g0, vec![1.0 / n as f64; n], g_ref)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleState {
    /// (sx, sy, sz) per spin.
    pub bloch: Vec<[f64; 3]>,
}

impl EnsembleState {
    /// All spins in the ground state, sz = −1.
    pub fn ground(n: usize) -> Self {
        Self { bloch: vec![[0.0, 0.0, -1.0]; n] }
    }

    pub fn len(&self) -> usize {
        self.bloch.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bloch.is_empty()
    }

    pub fn coherence(&self, i: usize) -> Complex64 {
        Complex64::new(self.bloch[i][0], self.bloch[i][1])
    }

    pub fn max_norm_deviation(&self) -> f64 {
        self.bloch
            .iter()
            .map(|s| ((s[0] * s[0] + s[1] * s[1] + s[2] * s[2]).sqrt() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Σ wᵢ g₀ᵢ mᵢ.
    pub fn polarization(&self, ens: &SpinEnsemble) -> Complex64 {
        (0..self.len())
            .map(|i| self.coherence(i) * (ens.weight[i] * ens.g0[i]))
            .sum()
    }
}

/// Coherence phase created from the ground state by a weak drive of phase
/// `drive_phase`.
pub fn excitation_coherence_phase(drive_phase: f64) -> f64 {
    drive_phase + 0.5 * PI
}

/// Instantaneous rotation by `angle` about the transverse axis at azimuth
/// `phase`. With `by_coupling` the angle is scaled by g₀/g_ref per spin.
pub fn hard_pulse(state: &mut EnsembleState, ens: &SpinEnsemble, angle: f64, phase: f64, by_coupling: bool) {
    let (ny, nx) = phase.sin_cos();
    for (i, s) in state.bloch.iter_mut().enumerate() {
        let a = if by_coupling { angle * ens.scale(i) } else { angle };
        let (sa, ca) = a.sin_cos();
        let dot = nx * s[0] + ny * s[1];
        let cross = [ny * s[2], -nx * s[2], nx * s[1] - ny * s[0]];
        for k in 0..3 {
            let n_k = [nx, ny, 0.0][k];
            s[k] = s[k] * ca + cross[k] * sa + n_k * dot * (1.0 - ca);
        }
    }
}

/// Exact free precession over `dt` seconds.
pub fn free_evolve(state: &mut EnsembleState, ens: &SpinEnsemble, dt: f64) {
    for (i, s) in state.bloch.iter_mut().enumerate() {
        let m = Complex64::new(s[0], s[1]) * Complex64::from_polar(1.0, TAU * ens.delta[i] * dt);
        s[0] = m.re;
        s[1] = m.im;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PropagateOptions {
    /// Record every `decimation`-th sample.
    pub decimation: usize,
    /// Keep every spin's Bloch vector at each recorded sample.
    pub record_trajectory: bool,
}

impl Default for PropagateOptions {
    fn default() -> Self {
        Self { decimation: 1, record_trajectory: false }
    }
}

/// Bloch vectors on a recording grid, stored spin-major:
/// `states[spin * grid.n_samples + record]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub grid: TimeGrid,
    pub n_spins: usize,
    pub states: Vec<[f64; 3]>,
}

impl Trajectory {
    pub fn at(&self, spin: usize, record: usize) -> [f64; 3] {
        self.states[spin * self.grid.n_samples + record]
    }
}

#[derive(Debug, Clone)]
pub struct Propagation {
    pub final_state: EnsembleState,
    /// Raw polarization Σ wᵢ g₀ᵢ mᵢ(t) on the recording grid.
    pub polarization: Waveform,
    pub trajectory: Option<Trajectory>,
    pub max_norm_drift: f64,
}

/// Recording grid for a drive grid and decimation.
pub fn recording_grid(grid: &TimeGrid, decimation: usize) -> Result<TimeGrid> {
    if decimation == 0 {
        return Err(Error::invalid("decimation", "must be at least 1"));
    }
    TimeGrid::new(grid.t_start, grid.dt * decimation as f64, (grid.n_samples - 1) / decimation + 1)
}

// Step index ranges [a, b) that need integration; the rest is free precession.
fn driven_segments(drive: &Waveform) -> Vec<(usize, usize)> {
    let peak = drive.peak();
    if peak == 0.0 {
        return Vec::new();
    }
    let n_steps = drive.grid.n_samples - 1;
    let mut out: Vec<(usize, usize)> = Vec::new();
    for (a, b) in drive.support(1e-10 * peak) {
        // The midpoint stencil reaches one sample either side.
        let lo = a.saturating_sub(2);
        let hi = (b + 2).min(n_steps);
        match out.last_mut() {
            Some(last) if lo <= last.1 => last.1 = last.1.max(hi),
            _ => out.push((lo, hi)),
        }
    }
    out
}

struct SpinRun {
    bloch: [f64; 3],
    drift: f64,
}

// Integrates one spin in the frame co-rotating at its detuning, in which the
// transverse coherence is constant whenever the drive vanishes.
fn run_spin<F>(
    s0: [f64; 3],
    delta: f64,
    scale: f64,
    drive: &Waveform,
    mids: &[Complex64],
    segments: &[(usize, usize)],
    decimation: usize,
    mut record: F,
) -> SpinRun
where
    F: FnMut(usize, Complex64, f64),
{
    let h = drive.grid.dt;
    let n = drive.grid.n_samples;
    let w = TAU * delta;
    let c = TAU * scale;
    let phasor = |k: usize| Complex64::from_polar(1.0, -w * h * k as f64);
    let half = Complex64::from_polar(1.0, -0.5 * w * h);
    let mut mt = Complex64::new(s0[0], s0[1]);
    let mut sz = s0[2];
    let norm0 = (mt.norm_sqr() + sz * sz).sqrt();

    let mut emit = |k: usize, mt: Complex64, sz: f64, q: Option<Complex64>| {
        if k % decimation == 0 {
            let q = q.unwrap_or_else(|| phasor(k));
            record(k / decimation, mt * q.conj(), sz);
        }
    };

    let mut k = 0usize;
    let mut seg = segments.iter().peekable();
    while k < n - 1 {
        let next_driven = seg.peek().map(|s| s.0).unwrap_or(n - 1);
        if k < next_driven {
            // Free precession: only recording.
            let first = k.div_ceil(decimation) * decimation;
            for r in (first..next_driven).step_by(decimation) {
                emit(r, mt, sz, None);
            }
            k = next_driven;
            continue;
        }
        let (_, b) = *seg.next().unwrap();
        let mut q = phasor(k);
        while k < b {
            emit(k, mt, sz, Some(q));
            let qh = q * half;
            let q1 = qh * half;
            let u0 = drive.samples[k] * q * c;
            let um = mids[k] * qh * c;
            let u1 = drive.samples[k + 1] * q1 * c;
            let f = |u: Complex64, m: Complex64, z: f64| (Complex64::new(0.0, -z) * u, (u.conj() * m).im);
            let (k1m, k1z) = f(u0, mt, sz);
            let (k2m, k2z) = f(um, mt + k1m * (0.5 * h), sz + k1z * 0.5 * h);
            let (k3m, k3z) = f(um, mt + k2m * (0.5 * h), sz + k2z * 0.5 * h);
            let (k4m, k4z) = f(u1, mt + k3m * h, sz + k3z * h);
            mt += (k1m + k2m * 2.0 + k3m * 2.0 + k4m) * (h / 6.0);
            sz += (k1z + 2.0 * k2z + 2.0 * k3z + k4z) * (h / 6.0);
            k += 1;
            q = if k % 4096 == 0 { phasor(k) } else { q1 };
        }
    }
    emit(n - 1, mt, sz, None);
    let m = mt * phasor(n - 1).conj();
    SpinRun {
        bloch: [m.re, m.im, sz],
        drift: ((mt.norm_sqr() + sz * sz).sqrt() - norm0).abs(),
    }
}

/// Propagates every spin under `drive` (the intracavity drive, in Hz of Rabi
/// frequency at g_ref) from `state`, recording the polarization and optionally
/// the full trajectory.
///
/// Spins are processed in chunks of [`CHUNK`] on the rayon pool; partial sums
/// are combined in chunk order, so the output does not depend on the number of
/// threads.
pub fn propagate(state: &EnsembleState, drive: &Waveform, ens: &SpinEnsemble, opts: PropagateOptions) -> Result<Propagation> {
    if state.len() != ens.len() {
        return Err(Error::invalid("state", format!("{} spins for an ensemble of {}", state.len(), ens.len())));
    }
    if drive.grid.n_samples < 2 {
        return Err(Error::invalid("drive", "needs at least two samples"));
    }
    let rec_grid = recording_grid(&drive.grid, opts.decimation)?;
    let n_rec = rec_grid.n_samples;
    let mids: Vec<Complex64> = (0..drive.grid.n_samples - 1).map(|i| rk4::midpoint(&drive.samples, i)).collect();
    let segments = driven_segments(drive);

    struct ChunkOut {
        p: Vec<Complex64>,
        states: Vec<[f64; 3]>,
        traj: Vec<[f64; 3]>,
        worst: (f64, usize),
    }

    let chunks: Vec<ChunkOut> = (0..ens.len().div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(ens.len());
            let mut out = ChunkOut {
                p: vec![Complex64::new(0.0, 0.0); n_rec],
                states: Vec::with_capacity(hi - lo),
                traj: if opts.record_trajectory { vec![[0.0; 3]; (hi - lo) * n_rec] } else { Vec::new() },
                worst: (0.0, lo),
            };
            for i in lo..hi {
                let wg = ens.weight[i] * ens.g0[i];
                let base = (i - lo) * n_rec;
                let p = &mut out.p;
                let traj = &mut out.traj;
                let run = run_spin(
                    state.bloch[i],
                    ens.delta[i],
                    ens.scale(i),
                    drive,
                    &mids,
                    &segments,
                    opts.decimation,
                    |r, m, sz| {
                        p[r] += m * wg;
                        if opts.record_trajectory {
                            traj[base + r] = [m.re, m.im, sz];
                        }
                    },
                );
                if run.drift > out.worst.0 {
                    out.worst = (run.drift, i);
                }
                out.states.push(run.bloch);
            }
            out
        })
        .collect();

    let mut polarization = vec![Complex64::new(0.0, 0.0); n_rec];
    let mut bloch = Vec::with_capacity(ens.len());
    let mut traj = Vec::new();
    let mut worst = (0.0, 0usize);
    for c in chunks {
        for (acc, v) in polarization.iter_mut().zip(&c.p) {
            *acc += v;
        }
        bloch.extend(c.states);
        traj.extend(c.traj);
        if c.worst.0 > worst.0 {
            worst = c.worst;
        }
    }
    if worst.0 > NORM_TOLERANCE {
        return Err(Error::NormDrift { spin: worst.1, drift: worst.0 });
    }
    Ok(Propagation {
        final_state: EnsembleState { bloch },
        polarization: Waveform::from_samples(rec_grid, polarization)?,
        trajectory: opts.record_trajectory.then(|| Trajectory { grid: rec_grid, n_spins: ens.len(), states: traj }),
        max_norm_drift: worst.0,
    })
}

/// Raw polarization Σ wᵢ g₀ᵢ (sxᵢ + i syᵢ) of a recorded trajectory.
pub fn trajectory_polarization(traj: &Trajectory, ens: &SpinEnsemble) -> Result<Waveform> {
    if traj.n_spins != ens.len() {
        return Err(Error::invalid("trajectory", "spin count differs from the ensemble"));
    }
    let n_rec = traj.grid.n_samples;
    let mut p = vec![Complex64::new(0.0, 0.0); n_rec];
    // Same association order as the streaming reduction in `propagate`.
    let mut partial = vec![Complex64::new(0.0, 0.0); n_rec];
    for c in 0..ens.len().div_ceil(CHUNK) {
        partial.fill(Complex64::new(0.0, 0.0));
        for i in c * CHUNK..((c + 1) * CHUNK).min(ens.len()) {
            let wg = ens.weight[i] * ens.g0[i];
            for (r, acc) in partial.iter_mut().enumerate() {
                let s = traj.at(i, r);
                *acc += Complex64::new(s[0], s[1]) * wg;
            }
        }
        for (acc, v) in p.iter_mut().zip(&partial) {
            *acc += v;
        }
    }
    Waveform::from_samples(traj.grid, p)
}

/// The detectable trace: the polarization used as the source of the cavity
/// input-output equation, normalized to unit gain.
pub fn filter_emission(polarization: &Waveform, r: &ResonatorParams) -> Result<Waveform> {
    intracavity_drive(polarization, r)
}

pub fn emitted_signal(traj: &Trajectory, ens: &SpinEnsemble, r: &ResonatorParams) -> Result<Waveform> {
    filter_emission(&trajectory_polarization(traj, ens)?, r)
}

/// Per-spin (δ, unwrapped coherence phase) sorted by δ, and the fitted slope
/// k_δ = d phase / dδ (rad/Hz).
pub fn spin_wave_phases(state: &EnsembleState, ens: &SpinEnsemble) -> (Vec<(f64, f64)>, Option<f64>) {
    let mut pts: Vec<(f64, f64)> = (0..ens.len()).map(|i| (ens.delta[i], state.coherence(i).arg())).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    for i in 1..pts.len() {
        let d = pts[i].1 - pts[i - 1].1;
        pts[i].1 -= TAU * (d / TAU).round();
    }
    let (x, y): (Vec<f64>, Vec<f64>) = pts.iter().cloned().unzip();
    (pts, linear_regression(&x, &y).map(|(_, b)| b))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdiabaticPhase {
    /// Total phase θ_δ = φ_W − 2πδt₀ (rad).
    pub theta_delta: f64,
    /// Pulse phase pattern φ_W (rad).
    pub phi_w: f64,
    /// The −πδ²/R part of φ_W (rad), R signed by the chirp.
    pub quadratic: f64,
    /// The remaining dynamical part of φ_W (rad).
    pub dynamical: f64,
    pub q_min: f64,
    /// False when Q_min ≤ 3 and the adiabatic picture is not trustworthy.
    pub adiabatic: bool,
}

// ∫|x| dx over [a, b].
fn abs_integral(a: f64, b: f64) -> f64 {
    if a >= 0.0 || b <= 0.0 {
        (b * b - a * a).abs() / 2.0
    } else {
        (a * a + b * b) / 2.0
    }
}

fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    if b <= a {
        return 0.0;
    }
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for k in 1..n {
        s += f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// Adiabatic-limit phase imprinted on a spin of detuning `delta` (Hz) by the
/// WURST `p` whose peak Rabi frequency for this spin is `omega0` (Hz).
///
/// In the adiabatic limit a pulse centered at t₀ maps the coherence in the
/// frame co-rotating at δ as `m̃ → −conj(m̃)·exp(2iθ_δ)`. Non-adiabatic
/// parameters still return a value with `adiabatic = false`.
pub fn adiabatic_phase(p: &WurstParams, delta: f64, omega0: f64) -> Result<AdiabaticPhase> {
    p.validate()?;
    let rate = p.chirp_rate();
    let s = p.chirp.factor();
    let (t_w, bw) = (p.duration, p.bandwidth);
    let q_min = if omega0 > 0.0 { TAU * omega0 * omega0 / rate.abs() } else { 0.0 };

    // x(τ) = δ − f(τ) runs linearly across the window.
    let x = |tau: f64| delta - s * bw * (tau / t_w - 0.5);
    let base = abs_integral(delta - 0.5 * bw, delta + 0.5 * bw) * t_w / bw;
    let excess = |tau: f64| {
        let om = omega0 * p.envelope(p.start() + tau);
        let xv = x(tau);
        (om * om + xv * xv).sqrt() - xv.abs()
    };
    // Split at the resonance crossing where |x| has its kink.
    let cross = t_w * (s * delta / bw + 0.5);
    let remainder = if cross > 0.0 && cross < t_w {
        simpson(excess, 0.0, cross, 4000) + simpson(excess, cross, t_w, 4000)
    } else {
        simpson(excess, 0.0, t_w, 8000)
    };
    let quadratic = -PI * delta * delta / (s * rate.abs());
    let dynamical = -s * PI * (base + remainder) - quadratic;
    let phi_w = p.phase + quadratic + dynamical;
    Ok(AdiabaticPhase {
        theta_delta: phi_w - TAU * delta * p.center,
        phi_w,
        quadratic,
        dynamical,
        q_min,
        adiabatic: q_min > 3.0,
    })
}

/// θ₁ − θ₀ for two consecutive pulses: the phase of a·b* in the two-pulse
/// propagator. A WURST pair multiplies the co-rotating coherence by
/// `exp(2i(θ₁ − θ₀))`.
pub fn two_pulse_phase(p0: &WurstParams, p1: &WurstParams, delta: f64, omega0: f64) -> Result<f64> {
    let a = adiabatic_phase(p0, delta, omega0)?;
    let b = adiabatic_phase(p1, delta, omega0)?;
    Ok(b.theta_delta - a.theta_delta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::waveforms::{wurst_waveform, ChirpSign};

    fn spec(n: usize) -> EnsembleSpec {
        EnsembleSpec {
            n_spins: n,
            detuning: DetuningDist::Gaussian { fwhm: 100e3, max: 300e3 },
            coupling: CouplingDist::LogUniform { min: 1.0, max: 2.0 },
            g_ref: None,
            sampling: Sampling::Stratified,
            seed: 3,
        }
    }

    #[test]
    fn single_spin_sits_at_median() {
        for det in [DetuningDist::Gaussian { fwhm: 1e5, max: 2e5 }, DetuningDist::Lorentzian { fwhm: 1e5, max: 5e5 }] {
            let e = sample_ensemble(&EnsembleSpec { detuning: det, ..spec(1) }).unwrap();
            assert_eq!(e.delta, vec![0.0]);
            assert_eq!(e.weight, vec![1.0]);
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        for sampling in [Sampling::Stratified, Sampling::Pseudorandom] {
            let s = EnsembleSpec { sampling, ..spec(500) };
            assert_eq!(sample_ensemble(&s).unwrap(), sample_ensemble(&s).unwrap());
        }
    }

    fn empirical_fwhm(mut d: Vec<f64>) -> f64 {
        // Histogram half-maximum width via the density at the center.
        d.sort_by(f64::total_cmp);
        let n = d.len();
        let bins = 200;
        let (lo, hi) = (d[0], d[n - 1]);
        let w = (hi - lo) / bins as f64;
        let mut h = vec![0usize; bins];
        for x in &d {
            h[(((x - lo) / w) as usize).min(bins - 1)] += 1;
        }
        let peak = *h.iter().max().unwrap() as f64;
        let above: Vec<usize> = (0..bins).filter(|&i| h[i] as f64 >= 0.5 * peak).collect();
        (above[above.len() - 1] - above[0] + 1) as f64 * w
    }

    #[test]
    fn gaussian_sample_width() {
        let e = sample_ensemble(&spec(100_000)).unwrap();
        let fwhm = empirical_fwhm(e.delta);
        assert!((fwhm / 100e3 - 1.0).abs() < 0.05, "fwhm {fwhm}");
    }

    #[test]
    fn lorentzian_sample_width() {
        let s = EnsembleSpec { detuning: DetuningDist::Lorentzian { fwhm: 100e3, max: 400e3 }, ..spec(100_000) };
        let fwhm = empirical_fwhm(sample_ensemble(&s).unwrap().delta);
        assert!((fwhm / 100e3 - 1.0).abs() < 0.05, "fwhm {fwhm}");
    }

    #[test]
    fn couplings_stay_in_range() {
        let e = sample_ensemble(&spec(1000)).unwrap();
        assert!(e.g0.iter().all(|&g| (1.0..=2.0).contains(&g)));
        assert_eq!(e.g_ref, 2.0);
        let mean_log: f64 = e.g0.iter().map(|g| g.ln()).sum::<f64>() / 1000.0;
        assert!((mean_log - 0.5 * 2f64.ln()).abs() < 1e-3);
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(sample_ensemble(&spec(0)).is_err());
        let narrow = EnsembleSpec { detuning: DetuningDist::Gaussian { fwhm: 1e5, max: 5e4 }, ..spec(10) };
        assert!(sample_ensemble(&narrow).is_err());
        let bad_g = EnsembleSpec { coupling: CouplingDist::LogUniform { min: 0.0, max: 1.0 }, ..spec(10) };
        assert!(sample_ensemble(&bad_g).is_err());
    }

    #[test]
    fn hard_pulse_creates_quadrature_coherence() {
        let e = SpinEnsemble::uniform(vec![0.0], 1.0).unwrap();
        for phase in [0.0, 0.7, 2.0] {
            let mut s = EnsembleState::ground(1);
            hard_pulse(&mut s, &e, 0.5 * PI, phase, false);
            let m = s.coherence(0);
            assert!((m.norm() - 1.0).abs() < 1e-12);
            let want = excitation_coherence_phase(phase);
            assert!((m.arg() - want).sin().abs() < 1e-12 && (m.arg() - want).cos() > 0.0);
        }
        let mut s = EnsembleState::ground(1);
        hard_pulse(&mut s, &e, PI, 0.3, false);
        assert!((s.bloch[0][2] - 1.0).abs() < 1e-12);
    }

    fn grid(n: usize, dt: f64) -> TimeGrid {
        TimeGrid::new(0.0, dt, n).unwrap()
    }

    #[test]
    fn zero_drive_is_exact_precession() {
        let e = SpinEnsemble::uniform(vec![0.0, 100e3], 1.0).unwrap();
        let mut s = EnsembleState::ground(2);
        hard_pulse(&mut s, &e, 0.5 * PI, 0.0, false);
        let start = s.clone();
        let drive = Waveform::zeros(grid(1001, 10e-9));
        let out = propagate(&s, &drive, &e, PropagateOptions::default()).unwrap();
        assert_eq!(out.final_state.bloch[0], start.bloch[0]);
        let expect = start.coherence(1) * Complex64::from_polar(1.0, TAU * 0.1 * 10.0);
        assert!((out.final_state.coherence(1) - expect).norm() < 1e-12);
        assert_eq!(out.final_state.bloch[1][2], start.bloch[1][2]);
    }

    #[test]
    fn resonant_rabi_flop() {
        // 1 MHz Rabi for 0.5 µs is a π pulse.
        let e = SpinEnsemble::uniform(vec![0.0], 1.0).unwrap();
        let mut samples = vec![Complex64::new(1e6, 0.0); 501];
        samples.extend(vec![Complex64::new(0.0, 0.0); 100]);
        let drive = Waveform::from_samples(grid(601, 1e-9), samples).unwrap();
        let out = propagate(&EnsembleState::ground(1), &drive, &e, PropagateOptions::default()).unwrap();
        assert!((out.final_state.bloch[0][2] - 1.0).abs() < 1e-4);
        assert!(out.max_norm_drift < 1e-7, "{}", out.max_norm_drift);
    }

    fn wurst_drive(p: &WurstParams, pad: f64) -> Waveform {
        let g = TimeGrid::aligned(0.0, 1.0 / (40.0 * p.bandwidth), p.start() - pad, p.end() + pad).unwrap();
        wurst_waveform(p, &g).unwrap()
    }

    #[test]
    fn adiabatic_wurst_inverts_in_band_spins() {
        let p = WurstParams::new(2e6, 200e-6, 500e3, ChirpSign::Up).unwrap().at(110e-6);
        let d: Vec<f64> = (0..81).map(|i| (i as f64 / 40.0 - 1.0) * 0.8 * 1e6).collect();
        let e = SpinEnsemble::uniform(d, 1.0).unwrap();
        let out = propagate(&EnsembleState::ground(e.len()), &wurst_drive(&p, 1e-6), &e, PropagateOptions::default()).unwrap();
        for (i, s) in out.final_state.bloch.iter().enumerate() {
            assert!(s[2] > 0.99, "spin {i} at {} Hz ends at sz={}", e.delta[i], s[2]);
        }
    }

    #[test]
    fn single_pulse_phase_matches_oracle() {
        // Q_min ≈ 110; the non-adiabatic correction shrinks roughly as 1/Q_min.
        let p = WurstParams::new(2e6, 100e-6, 600e3, ChirpSign::Down).unwrap().at(60e-6).with_phase(0.4);
        let drive = wurst_drive(&p, 2e-6);
        let eps = 0.3;
        for delta in [-6e5, -2e5, 0.0, 1.3e5, 5e5] {
            let e = SpinEnsemble::uniform(vec![delta], 1.0).unwrap();
            let t0 = drive.grid.t_start;
            // Coherence ε at the grid start.
            let m0 = Complex64::from_polar(eps, 0.9);
            let state = EnsembleState { bloch: vec![[m0.re, m0.im, -(1.0 - eps * eps).sqrt()]] };
            let out = propagate(&state, &drive, &e, PropagateOptions::default()).unwrap();
            let t1 = drive.grid.t_end();
            let ap = adiabatic_phase(&p, delta, p.amplitude).unwrap();
            assert!(ap.adiabatic);
            let m_tilde0 = m0 * Complex64::from_polar(1.0, -TAU * delta * t0);
            let want = -m_tilde0.conj() * Complex64::from_polar(1.0, 2.0 * ap.theta_delta + TAU * delta * t1);
            let got = out.final_state.coherence(0);
            let err = (got / want).arg().abs();
            assert!(err < 0.05, "δ={delta}: phase error {err}");
        }
    }

    #[test]
    fn identical_pair_phase_is_linear_in_delta() {
        let p0 = WurstParams::new(2e6, 100e-6, 150e3, ChirpSign::Up).unwrap().at(0.0);
        let p1 = p0.at(500e-6);
        assert_eq!(two_pulse_phase(&p0, &p1, 0.0, 150e3).unwrap(), 0.0);
        for delta in [-1e4, 1e4, 3.3e5] {
            let got = two_pulse_phase(&p0, &p1, delta, 150e3).unwrap();
            assert!((got - TAU * delta * (0.0 - 500e-6)).abs() < 1e-9);
        }
    }

    #[test]
    fn quadratic_term_is_even_and_residual_matches_rates() {
        let p0 = WurstParams::new(2e6, 100e-6, 150e3, ChirpSign::Up).unwrap();
        let p1 = WurstParams::new(1e6, 100e-6, 150e3, ChirpSign::Up).unwrap();
        let d = 2e5;
        let a = adiabatic_phase(&p0, d, 150e3).unwrap();
        let b = adiabatic_phase(&p0, -d, 150e3).unwrap();
        assert_eq!(a.quadratic, b.quadratic);
        assert_eq!(a, adiabatic_phase(&p0, d, 150e3).unwrap());
        assert!((a.theta_delta - (a.phi_w - TAU * d * p0.center)).abs() < 1e-12);
        // Quadratic residual for different rates: π δ² (1/R₀ − 1/R₁).
        let qa = adiabatic_phase(&p1, d, 150e3).unwrap().quadratic - a.quadratic;
        let want = PI * d * d * (1.0 / p0.chirp_rate() - 1.0 / p1.chirp_rate());
        assert!((qa - want).abs() < 1e-9 * want.abs());
    }

    #[test]
    fn non_adiabatic_is_flagged() {
        let p = WurstParams::new(2e6, 100e-6, 10e3, ChirpSign::Up).unwrap();
        let ap = adiabatic_phase(&p, 0.0, 10e3).unwrap();
        assert!(!ap.adiabatic && ap.q_min < 3.0);
    }

    #[test]
    fn trajectory_and_streaming_polarization_agree() {
        let p = WurstParams::new(1e6, 40e-6, 100e3, ChirpSign::Up).unwrap().at(30e-6);
        let e = sample_ensemble(&EnsembleSpec { n_spins: 600, ..spec(600) }).unwrap();
        let mut s = EnsembleState::ground(e.len());
        hard_pulse(&mut s, &e, 0.1, 0.0, true);
        let opts = PropagateOptions { decimation: 3, record_trajectory: true };
        let out = propagate(&s, &wurst_drive(&p, 8e-6), &e, opts).unwrap();
        let traj = out.trajectory.as_ref().unwrap();
        let p_traj = trajectory_polarization(traj, &e).unwrap();
        assert_eq!(p_traj.samples, out.polarization.samples);
        let dense = propagate(&s, &wurst_drive(&p, 8e-6), &e, PropagateOptions { decimation: 1, record_trajectory: true }).unwrap();
        let dt = dense.trajectory.unwrap();
        assert_eq!(dt.at(17, dt.grid.n_samples - 1), dense.final_state.bloch[17]);
        assert_eq!(dt.at(17, 3 * 5), traj.at(17, 5));
    }

    #[test]
    fn polarization_independent_of_thread_count() {
        let p = WurstParams::new(1e6, 40e-6, 100e3, ChirpSign::Up).unwrap().at(30e-6);
        let e = sample_ensemble(&spec(1500)).unwrap();
        let mut s = EnsembleState::ground(e.len());
        hard_pulse(&mut s, &e, 0.1, 0.0, true);
        let drive = wurst_drive(&p, 5e-6);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| propagate(&s, &drive, &e, PropagateOptions { decimation: 4, record_trajectory: false }).unwrap())
        };
        let (a, b) = (run(1), run(3));
        assert_eq!(a.polarization.samples, b.polarization.samples);
        assert_eq!(a.final_state, b.final_state);
    }

    #[test]
    fn aligned_ensemble_polarization() {
        let e = sample_ensemble(&spec(50)).unwrap();
        let s = EnsembleState { bloch: vec![[0.0, 1.0, 0.0]; 50] };
        let p = s.polarization(&e);
        assert!((p.im - e.coherent_sum()).abs() < 1e-12 && p.re == 0.0);
    }

    #[test]
    fn dephased_state_sits_at_statistical_floor() {
        let n = 10_000;
        let e = SpinEnsemble::uniform(vec![0.0; n], 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut over = 0;
        for _ in 0..50 {
            let bloch = (0..n)
                .map(|_| {
                    let (s, c) = (rng.random::<f64>() * TAU).sin_cos();
                    [c, s, 0.0]
                })
                .collect();
            if (EnsembleState { bloch }).polarization(&e).norm() > 3.0 / (n as f64).sqrt() {
                over += 1;
            }
        }
        assert!(over <= 1);
    }

    #[test]
    fn spin_wave_slope_after_free_evolution() {
        let e = SpinEnsemble::uniform((0..101).map(|i| (i as f64 - 50.0) * 1e3).collect(), 1.0).unwrap();
        let mut s = EnsembleState::ground(e.len());
        hard_pulse(&mut s, &e, 0.2, 0.0, false);
        free_evolve(&mut s, &e, 20e-6);
        let (_, k) = spin_wave_phases(&s, &e);
        assert!((k.unwrap() - TAU * 20e-6).abs() < 1e-9);
    }
}
