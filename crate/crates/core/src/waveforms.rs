// Copyright 2026 The chirpmem Authors
// SPDX-License-Identifier: Apache-2.0

//! WURST chirps and Gaussian excitations as sampled complex baseband envelopes.
//!
//! Samples are in Hz of Rabi frequency, in the frame rotating at the
//! cavity/ensemble center frequency. `I` is the real part and `Q` the
//! imaginary part.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Sample-count slack when comparing times against the lattice.
const LATTICE_EPS: f64 = 1e-6;

/// Default WURST order.
pub const DEFAULT_WURST_ORDER: u32 = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t_start: f64,
    pub dt: f64,
    pub n_samples: usize,
}

impl TimeGrid {
    pub fn new(t_start: f64, dt: f64, n_samples: usize) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::invalid("dt", format!("must be positive, got {dt}")));
        }
        if n_samples < 2 {
            return Err(Error::invalid("n_samples", format!("need at least 2, got {n_samples}")));
        }
        if !t_start.is_finite() {
            return Err(Error::invalid("t_start", "must be finite"));
        }
        Ok(Self { t_start, dt, n_samples })
    }

    /// Smallest grid on the lattice `origin + k·dt` covering `[t_a, t_b]`.
    pub fn aligned(origin: f64, dt: f64, t_a: f64, t_b: f64) -> Result<Self> {
        if t_b < t_a {
            return Err(Error::invalid("window", format!("end {t_b} precedes start {t_a}")));
        }
        let k_a = ((t_a - origin) / dt + LATTICE_EPS).floor();
        let k_b = ((t_b - origin) / dt - LATTICE_EPS).ceil();
        let n = (k_b - k_a) as usize + 1;
        Self::new(origin + k_a * dt, dt, n.max(2))
    }

    #[inline]
    pub fn time(&self, i: usize) -> f64 {
        self.t_start + i as f64 * self.dt
    }

    pub fn t_end(&self) -> f64 {
        self.time(self.n_samples - 1)
    }

    pub fn contains_window(&self, t_a: f64, t_b: f64) -> bool {
        let slack = LATTICE_EPS * self.dt;
        t_a >= self.t_start - slack && t_b <= self.t_end() + slack
    }

    /// Index of the first sample at or after `t`, clamped to the grid.
    pub fn index_at_or_after(&self, t: f64) -> usize {
        let k = ((t - self.t_start) / self.dt - LATTICE_EPS).ceil();
        (k.max(0.0) as usize).min(self.n_samples - 1)
    }

    /// Index of the sample nearest to `t`, clamped to the grid.
    pub fn nearest_index(&self, t: f64) -> usize {
        let k = ((t - self.t_start) / self.dt).round();
        (k.max(0.0) as usize).min(self.n_samples - 1)
    }

    /// Offset of this grid's first sample on `other`'s lattice, if both
    /// grids share `dt` and their lattices coincide.
    pub fn offset_in(&self, other: &TimeGrid) -> Option<isize> {
        if ((self.dt - other.dt) / other.dt).abs() > 1e-9 {
            return None;
        }
        let k = (self.t_start - other.t_start) / other.dt;
        let kr = k.round();
        ((k - kr).abs() < 1e-4).then_some(kr as isize)
    }
}

/// Default sampling period: resolves the fastest rotation any kernel sees.
pub fn default_dt(max_bandwidth: f64, detuning_span: f64, max_rabi: f64) -> f64 {
    [max_bandwidth, detuning_span, max_rabi]
        .into_iter()
        .filter(|&x| x > 0.0)
        .map(|x| 1.0 / (20.0 * x))
        .fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChirpSign {
    Up,
    Down,
}

impl ChirpSign {
    pub fn factor(self) -> f64 {
        match self {
            ChirpSign::Up => 1.0,
            ChirpSign::Down => -1.0,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            ChirpSign::Up => ChirpSign::Down,
            ChirpSign::Down => ChirpSign::Up,
        }
    }
}

/// Parameters of one WURST-N chirp.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WurstParams {
    /// Swept bandwidth Γ_W (Hz).
    pub bandwidth: f64,
    /// Pulse duration T_W (s).
    pub duration: f64,
    /// Truncation order N (even, ≥ 2).
    pub order: u32,
    /// Peak drive, expressed as the Rabi frequency (Hz) seen by a spin of
    /// reference coupling on cavity resonance.
    pub amplitude: f64,
    /// Carrier phase φ₀ (rad).
    pub phase: f64,
    pub chirp: ChirpSign,
    /// Pulse center t₀ (s).
    pub center: f64,
}

impl WurstParams {
    pub fn new(bandwidth: f64, duration: f64, amplitude: f64, chirp: ChirpSign) -> Result<Self> {
        let p = Self {
            bandwidth,
            duration,
            order: DEFAULT_WURST_ORDER,
            amplitude,
            phase: 0.0,
            chirp,
            center: 0.0,
        };
        p.validate()?;
        Ok(p)
    }

    /// A chirp specified by its signed rate instead of its bandwidth.
    pub fn from_rate(rate: f64, duration: f64, amplitude: f64) -> Result<Self> {
        let chirp = if rate < 0.0 { ChirpSign::Down } else { ChirpSign::Up };
        Self::new(rate.abs() * duration, duration, amplitude, chirp)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth > 0.0 && self.bandwidth.is_finite()) {
            return Err(Error::invalid("bandwidth", format!("must be positive, got {}", self.bandwidth)));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::invalid("duration", format!("must be positive, got {}", self.duration)));
        }
        if self.order < 2 || self.order % 2 != 0 {
            return Err(Error::invalid("order", format!("must be even and at least 2, got {}", self.order)));
        }
        if !(self.amplitude >= 0.0 && self.amplitude.is_finite()) {
            return Err(Error::invalid("amplitude", format!("must be non-negative, got {}", self.amplitude)));
        }
        if !self.phase.is_finite() || !self.center.is_finite() {
            return Err(Error::invalid("phase/center", "must be finite"));
        }
        Ok(())
    }

    pub fn at(mut self, center: f64) -> Self {
        self.center = center;
        self
    }

    pub fn with_phase(mut self, phase: f64) -> Self {
        self.phase = phase;
        self
    }

    pub fn with_order(mut self, order: u32) -> Self {
        self.order = order;
        self
    }

    /// Signed chirp rate R (Hz/s).
    pub fn chirp_rate(&self) -> f64 {
        self.chirp.factor() * self.bandwidth / self.duration
    }

    pub fn start(&self) -> f64 {
        self.center - 0.5 * self.duration
    }

    pub fn end(&self) -> f64 {
        self.center + 0.5 * self.duration
    }

    /// Amplitude modulation A_W(t): 1 at the center, 0 at and beyond the edges.
    pub fn envelope(&self, t: f64) -> f64 {
        let x = (t - self.center) / self.duration;
        if x.abs() > 0.5 {
            return 0.0;
        }
        1.0 - (PI * x).sin().abs().powi(self.order as i32)
    }

    /// Instantaneous frequency f_W(t) (Hz).
    pub fn frequency(&self, t: f64) -> f64 {
        self.chirp.factor() * self.bandwidth * ((t - self.start()) / self.duration - 0.5)
    }

    /// Carrier phase 2π∫f_W dt' + φ₀, integrated from the pulse start.
    pub fn carrier_phase(&self, t: f64) -> f64 {
        let tau = t - self.start();
        let s = self.chirp.factor();
        TAU * s * (-0.5 * self.bandwidth * tau + 0.5 * self.bandwidth / self.duration * tau * tau)
            + self.phase
    }

    pub fn sample(&self, t: f64) -> Complex64 {
        let a = self.amplitude * self.envelope(t);
        if a == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        Complex64::from_polar(a, self.carrier_phase(t))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianParams {
    /// Peak drive (Hz of Rabi frequency at reference coupling).
    pub amplitude: f64,
    pub fwhm: f64,
    /// Truncation window, centered.
    pub duration: f64,
    pub phase: f64,
    pub center: f64,
}

impl GaussianParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.fwhm > 0.0) {
            return Err(Error::invalid("fwhm", format!("must be positive, got {}", self.fwhm)));
        }
        if !(self.duration >= self.fwhm) {
            return Err(Error::invalid(
                "duration",
                format!("must be at least the FWHM {}, got {}", self.fwhm, self.duration),
            ));
        }
        if !(self.amplitude >= 0.0 && self.amplitude.is_finite()) {
            return Err(Error::invalid("amplitude", "must be non-negative and finite"));
        }
        Ok(())
    }

    pub fn sigma(&self) -> f64 {
        self.fwhm / (2.0 * (2.0 * 2f64.ln()).sqrt())
    }

    pub fn start(&self) -> f64 {
        self.center - 0.5 * self.duration
    }

    pub fn end(&self) -> f64 {
        self.center + 0.5 * self.duration
    }

    /// Pulse area ∫|Ω| dt of the truncated envelope (Hz·s = cycles).
    pub fn area(&self) -> f64 {
        let s = self.sigma();
        let half = 0.5 * self.duration / (s * 2f64.sqrt());
        self.amplitude * s * (2.0 * PI).sqrt() * erf(half)
    }

    pub fn sample(&self, t: f64) -> Complex64 {
        let x = t - self.center;
        if x.abs() > 0.5 * self.duration * (1.0 + 1e-12) {
            return Complex64::new(0.0, 0.0);
        }
        let s = self.sigma();
        Complex64::from_polar(self.amplitude * (-0.5 * x * x / (s * s)).exp(), self.phase)
    }
}

// Abramowitz-Stegun 7.1.26 is too coarse for area checks; use a series/continued
// fraction pair accurate to ~1e-15.
fn erf(x: f64) -> f64 {
    if x < 0.0 {
        return -erf(-x);
    }
    if x < 2.5 {
        let mut term = x;
        let mut sum = x;
        let x2 = x * x;
        let mut n = 0.0;
        while term.abs() > 1e-17 * sum.abs() {
            n += 1.0;
            term *= -x2 / n;
            sum += term / (2.0 * n + 1.0);
        }
        2.0 / PI.sqrt() * sum
    } else {
        // erfc continued fraction (Lentz), converges quickly for x ≥ 2.5.
        let mut f = x;
        let mut c = x;
        let mut d = 0.0;
        for k in 1..200 {
            let a = k as f64 * 0.5;
            d = x + a * d;
            d = 1.0 / d;
            c = x + a / c;
            let delta = c * d;
            f *= delta;
            if (delta - 1.0).abs() < 1e-16 {
                break;
            }
        }
        1.0 - (-x * x).exp() / (f * PI.sqrt())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub grid: TimeGrid,
    pub samples: Vec<Complex64>,
}

impl Waveform {
    pub fn zeros(grid: TimeGrid) -> Self {
        Self {
            samples: vec![Complex64::new(0.0, 0.0); grid.n_samples],
            grid,
        }
    }

    pub fn from_samples(grid: TimeGrid, samples: Vec<Complex64>) -> Result<Self> {
        if samples.len() != grid.n_samples {
            return Err(Error::GridMismatch(format!(
                "{} samples for a grid of {}",
                samples.len(),
                grid.n_samples
            )));
        }
        if samples.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::invalid("samples", "non-finite value"));
        }
        Ok(Self { grid, samples })
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.grid.n_samples).map(move |i| self.grid.time(i))
    }

    /// Σ|s|²·dt.
    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.grid.dt
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Maximal runs of samples with `|s| > threshold`, as inclusive index pairs.
    pub fn support(&self, threshold: f64) -> Vec<(usize, usize)> {
        let mut runs = Vec::new();
        let mut open: Option<usize> = None;
        for (i, z) in self.samples.iter().enumerate() {
            let on = z.norm() > threshold;
            match (on, open) {
                (true, None) => open = Some(i),
                (false, Some(a)) => {
                    runs.push((a, i - 1));
                    open = None;
                }
                _ => {}
            }
        }
        if let Some(a) = open {
            runs.push((a, self.samples.len() - 1));
        }
        runs
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            grid: self.grid,
            samples: self.samples.iter().map(|z| z * factor).collect(),
        }
    }
}

fn check_grid_resolution(grid: &TimeGrid, bandwidth: f64) -> Result<()> {
    let bound = 1.0 / (20.0 * bandwidth);
    if grid.dt > bound * (1.0 + 1e-9) {
        return Err(Error::GridTooCoarse {
            dt: grid.dt,
            bound,
            what: "WURST bandwidth requires dt <= 1/(20 Γ_W)",
        });
    }
    Ok(())
}

fn check_window(grid: &TimeGrid, start: f64, end: f64) -> Result<()> {
    if !grid.contains_window(start, end) {
        return Err(Error::WindowOutsideGrid {
            start,
            end,
            grid_start: grid.t_start,
            grid_end: grid.t_end(),
        });
    }
    Ok(())
}

pub fn wurst_waveform(p: &WurstParams, grid: &TimeGrid) -> Result<Waveform> {
    p.validate()?;
    check_grid_resolution(grid, p.bandwidth)?;
    check_window(grid, p.start(), p.end())?;
    let samples = (0..grid.n_samples).map(|i| p.sample(grid.time(i))).collect();
    Ok(Waveform { grid: *grid, samples })
}

/// WURST synthesized on the compact lattice-aligned grid covering its window.
pub fn wurst_pulse(p: &WurstParams, origin: f64, dt: f64) -> Result<Waveform> {
    let grid = TimeGrid::aligned(origin, dt, p.start(), p.end())?;
    wurst_waveform(p, &grid)
}

pub fn gaussian_waveform(p: &GaussianParams, grid: &TimeGrid) -> Result<Waveform> {
    p.validate()?;
    check_window(grid, p.start(), p.end())?;
    let samples = (0..grid.n_samples).map(|i| p.sample(grid.time(i))).collect();
    Ok(Waveform { grid: *grid, samples })
}

pub fn gaussian_pulse(p: &GaussianParams, origin: f64, dt: f64) -> Result<Waveform> {
    let grid = TimeGrid::aligned(origin, dt, p.start(), p.end())?;
    gaussian_waveform(p, &grid)
}

/// Sums time-ordered, non-overlapping events onto one waveform.
///
/// With `grid = None` the result lives on the union of the event grids. All
/// event grids must share `dt` and lie on a common sample lattice. Each
/// event's window is its own grid span; windows may touch but not overlap.
pub fn render_timeline(events: &[Waveform], grid: Option<&TimeGrid>) -> Result<Waveform> {
    for (i, pair) in events.windows(2).enumerate() {
        let (a, b) = (&pair[0].grid, &pair[1].grid);
        if b.t_start < a.t_start {
            return Err(Error::invalid("events", format!("event {} starts before event {i}", i + 1)));
        }
    }
    // Sorted by start, so only neighbours in start order can overlap first,
    // but a long early event may cover several later ones.
    let mut furthest: Option<(usize, f64)> = None;
    for (i, ev) in events.iter().enumerate() {
        if let Some((j, end)) = furthest {
            if ev.grid.t_start < end - 0.5 * ev.grid.dt {
                return Err(Error::Overlap { first: j, second: i });
            }
        }
        let end = ev.grid.t_end();
        if furthest.is_none_or(|(_, e)| end > e) {
            furthest = Some((i, end));
        }
    }

    let target = match grid {
        Some(g) => *g,
        None => {
            let first = events
                .first()
                .ok_or_else(|| Error::invalid("events", "empty event list needs an explicit grid"))?;
            let dt = first.grid.dt;
            let start = events.iter().map(|e| e.grid.t_start).fold(f64::INFINITY, f64::min);
            let end = events.iter().map(|e| e.grid.t_end()).fold(f64::NEG_INFINITY, f64::max);
            TimeGrid::aligned(first.grid.t_start, dt, start, end)?
        }
    };

    let mut out = Waveform::zeros(target);
    for (i, ev) in events.iter().enumerate() {
        let offset = ev.grid.offset_in(&target).ok_or_else(|| {
            Error::GridMismatch(format!("event {i} is not on the timeline sample lattice"))
        })?;
        for (k, z) in ev.samples.iter().enumerate() {
            let idx = offset + k as isize;
            if idx < 0 || idx as usize >= target.n_samples {
                if z.norm() > 0.0 {
                    return Err(Error::WindowOutsideGrid {
                        start: ev.grid.t_start,
                        end: ev.grid.t_end(),
                        grid_start: target.t_start,
                        grid_end: target.t_end(),
                    });
                }
                continue;
            }
            out.samples[idx as usize] += z;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn wurst_2mhz() -> WurstParams {
        WurstParams::new(2e6, 100e-6, 1e5, ChirpSign::Up).unwrap().at(60e-6)
    }

    fn grid_for(p: &WurstParams) -> TimeGrid {
        TimeGrid::aligned(0.0, 1.0 / (20.0 * p.bandwidth), p.start(), p.end()).unwrap()
    }

    #[test]
    fn envelope_zero_at_edges_and_peak_at_center() {
        let p = wurst_2mhz();
        assert!(p.sample(p.start()).norm() < 1e-12);
        assert!(p.sample(p.end()).norm() < 1e-12);
        assert!((p.sample(p.center).norm() - p.amplitude).abs() < 1e-9);
    }

    #[test]
    fn wurst_fm_am_profile() {
        // Γ_W = 2 MHz, T_W = 100 µs: linear ramp from -1 MHz to +1 MHz,
        // envelope flat (> 0.99) over the inner half of the window.
        let p = wurst_2mhz();
        assert!((p.frequency(p.start()) + 1e6).abs() < 1e-6);
        assert!((p.frequency(p.end()) - 1e6).abs() < 1e-6);
        assert!(p.frequency(p.center).abs() < 1e-6);
        for k in 0..=70 {
            let t = p.center + (k as f64 / 70.0 - 0.5) * 0.5 * p.duration;
            assert!(p.envelope(t) > 0.99, "envelope {} at {t}", p.envelope(t));
        }
        assert!((p.chirp_rate() - 2e10).abs() < 1e-3);
    }

    #[test]
    fn instantaneous_frequency_is_linear_with_chirp_rate() {
        let p = wurst_2mhz();
        let grid = grid_for(&p);
        let w = wurst_waveform(&p, &grid).unwrap();
        let inner: Vec<(f64, f64)> = (1..grid.n_samples - 1)
            .filter(|&i| p.envelope(grid.time(i)) > 0.5)
            .map(|i| {
                let dphi = (w.samples[i + 1] * w.samples[i - 1].conj()).arg();
                (grid.time(i), dphi / (2.0 * grid.dt) / TAU)
            })
            .collect();
        let n = inner.len() as f64;
        let (mt, mf) = inner.iter().fold((0.0, 0.0), |a, &(t, f)| (a.0 + t / n, a.1 + f / n));
        let sxy: f64 = inner.iter().map(|&(t, f)| (t - mt) * (f - mf)).sum();
        let sxx: f64 = inner.iter().map(|&(t, _)| (t - mt) * (t - mt)).sum();
        let slope = sxy / sxx;
        assert!((slope / p.chirp_rate() - 1.0).abs() < 0.01, "slope {slope}");
    }

    #[test]
    fn rejects_coarse_grid_and_outside_window() {
        let p = wurst_2mhz();
        let coarse = TimeGrid::aligned(0.0, 1.0 / (10.0 * p.bandwidth), p.start(), p.end()).unwrap();
        assert!(matches!(wurst_waveform(&p, &coarse), Err(Error::GridTooCoarse { .. })));
        let short = TimeGrid::aligned(0.0, 1.0 / (20.0 * p.bandwidth), p.start(), p.center).unwrap();
        assert!(matches!(wurst_waveform(&p, &short), Err(Error::WindowOutsideGrid { .. })));
    }

    #[test]
    fn wurst_parameter_validation() {
        assert!(WurstParams::new(2e6, 100e-6, 1e5, ChirpSign::Up).unwrap().with_order(3).validate().is_err());
        assert!(WurstParams::new(0.0, 100e-6, 1e5, ChirpSign::Up).is_err());
        assert!(WurstParams::new(2e6, -1.0, 1e5, ChirpSign::Up).is_err());
        assert!(WurstParams::new(2e6, 1e-4, -1.0, ChirpSign::Up).is_err());
    }

    #[test]
    fn flipping_chirp_sign_conjugates() {
        let up = wurst_2mhz();
        let down = WurstParams { chirp: ChirpSign::Down, ..up };
        let g = grid_for(&up);
        let wu = wurst_waveform(&up, &g).unwrap();
        let wd = wurst_waveform(&down, &g).unwrap();
        for (a, b) in wu.samples.iter().zip(&wd.samples) {
            assert!((a.conj() - b).norm() < 1e-9 * up.amplitude);
        }
    }

    #[test]
    fn gaussian_shape() {
        let p = GaussianParams { amplitude: 0.0, fwhm: 4e-6, duration: 8e-6, phase: 0.3, center: 5e-6 };
        let g = TimeGrid::aligned(0.0, 10e-9, p.start(), p.end()).unwrap();
        assert!(gaussian_waveform(&p, &g).unwrap().samples.iter().all(|z| z.norm() == 0.0));

        let p = GaussianParams { amplitude: 2.0, ..p };
        assert!((p.sample(p.center).norm() - 2.0).abs() < 1e-12);
        assert!((p.sample(p.center).arg() - 0.3).abs() < 1e-12);
        // Half maximum at center ± 2 µs.
        assert!((p.sample(p.center + 2e-6).norm() - 1.0).abs() < 1e-12);
        assert!((p.sample(p.center - 2e-6).norm() - 1.0).abs() < 1e-12);
        assert_eq!(p.sample(p.center + 4.5e-6).norm(), 0.0);

        let bad = GaussianParams { fwhm: 0.0, ..p };
        assert!(gaussian_waveform(&bad, &g).is_err());
    }

    #[test]
    fn gaussian_area_matches_quadrature() {
        let p = GaussianParams { amplitude: 3.0, fwhm: 4e-6, duration: 8e-6, phase: 0.0, center: 0.0 };
        let n = 20001;
        let h = p.duration / (n - 1) as f64;
        let simpson: f64 = (0..n)
            .map(|i| {
                let w = if i == 0 || i == n - 1 { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
                w * p.sample(p.start() + i as f64 * h).norm()
            })
            .sum::<f64>()
            * h
            / 3.0;
        assert!((p.area() / simpson - 1.0).abs() < 1e-9);
    }

    #[test]
    fn timeline_of_nothing_is_zero() {
        let g = TimeGrid::new(0.0, 1e-8, 100).unwrap();
        let w = render_timeline(&[], Some(&g)).unwrap();
        assert!(w.samples.iter().all(|z| z.norm() == 0.0));
        assert!(render_timeline(&[], None).is_err());
    }

    #[test]
    fn timeline_single_event_reembedded() {
        let p = wurst_2mhz();
        let ev = wurst_pulse(&p, 0.0, 25e-9).unwrap();
        let same = render_timeline(std::slice::from_ref(&ev), None).unwrap();
        assert_eq!(same, ev);
        let wide = TimeGrid::aligned(0.0, 25e-9, 0.0, 200e-6).unwrap();
        let out = render_timeline(std::slice::from_ref(&ev), Some(&wide)).unwrap();
        let off = ev.grid.offset_in(&wide).unwrap() as usize;
        for (k, z) in ev.samples.iter().enumerate() {
            assert_eq!(out.samples[off + k], *z);
        }
        assert!((out.energy() - ev.energy()).abs() < 1e-9 * ev.energy());
    }

    #[test]
    fn timeline_two_pulses_disjoint_support() {
        let dt = 25e-9;
        let a = wurst_2mhz();
        let b = a.at(a.center + 500e-6);
        let events = [wurst_pulse(&a, 0.0, dt).unwrap(), wurst_pulse(&b, 0.0, dt).unwrap()];
        let out = render_timeline(&events, None).unwrap();
        let runs = out.support(0.0);
        assert_eq!(runs.len(), 2);
        for (run, p) in runs.iter().zip([a, b]) {
            assert!(out.grid.time(run.0) > p.start() && out.grid.time(run.0) - p.start() < 2.0 * dt);
            assert!(out.grid.time(run.1) < p.end() && p.end() - out.grid.time(run.1) < 2.0 * dt);
        }
    }

    #[test]
    fn timeline_overlap_rejected_with_both_indices() {
        let dt = 25e-9;
        let a = wurst_2mhz();
        let b = a.at(a.center + 50e-6);
        let events = [wurst_pulse(&a, 0.0, dt).unwrap(), wurst_pulse(&b, 0.0, dt).unwrap()];
        match render_timeline(&events, None) {
            Err(Error::Overlap { first: 0, second: 1 }) => {}
            other => panic!("expected overlap, got {other:?}"),
        }
    }

    #[test]
    fn default_dt_takes_the_fastest_scale() {
        assert!((default_dt(4e6, 1e6, 3e5) - 1.0 / 80e6).abs() < 1e-20);
        assert!((default_dt(1e5, 2e6, 0.0) - 1.0 / 40e6).abs() < 1e-20);
    }

    proptest! {
        #[test]
        fn envelope_is_symmetric(s in 0.0f64..0.5, order in 1u32..15) {
            let p = WurstParams::new(1e6, 200e-6, 1.0, ChirpSign::Up).unwrap().at(1e-3).with_order(2 * order);
            let d = s * p.duration;
            prop_assert!((p.envelope(p.center + d) - p.envelope(p.center - d)).abs() < 1e-12);
        }

        #[test]
        fn energy_scales_with_amplitude_squared(a in 0.1f64..10.0, b in 0.1f64..10.0) {
            let pa = WurstParams::new(1e6, 50e-6, a, ChirpSign::Down).unwrap();
            let pb = WurstParams { amplitude: b, ..pa };
            let g = TimeGrid::aligned(0.0, 50e-9, pa.start(), pa.end()).unwrap();
            let ea = wurst_waveform(&pa, &g).unwrap().energy();
            let eb = wurst_waveform(&pb, &g).unwrap().energy();
            prop_assert!((ea / eb - (a * a) / (b * b)).abs() < 1e-9 * (a * a) / (b * b));
        }
    }
}
