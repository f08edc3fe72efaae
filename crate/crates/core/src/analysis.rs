// Copyright 2026 The chirpmem Authors
// SPDX-License-Identifier: Apache-2.0

//! Echo extraction, decay fits, calibration helpers and the WURST mode map.

use std::f64::consts::{PI, TAU};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::fit::{levenberg_marquardt, linear_regression, LmOptions};
use crate::waveforms::{Waveform, WurstParams};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EchoStatus {
    Found,
    /// Nothing above the noise floor; amplitude is reported as 0.
    NoEcho,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EchoRecord {
    pub center: f64,
    pub amplitude: f64,
    pub phase: f64,
    /// Gaussian σ of |trace| (s).
    pub width: f64,
    /// RMS residual of the Gaussian fit (trace units).
    pub residual: f64,
    pub status: EchoStatus,
}

impl EchoRecord {
    pub fn found(&self) -> bool {
        self.status == EchoStatus::Found
    }

    pub fn phasor(&self) -> Complex64 {
        Complex64::from_polar(self.amplitude, self.phase)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EchoOptions {
    /// Minimum fitted amplitude over residual RMS.
    pub min_snr: f64,
    /// Optional absolute floor below which no echo is reported.
    pub floor: Option<f64>,
}

impl Default for EchoOptions {
    fn default() -> Self {
        Self { min_snr: 5.0, floor: None }
    }
}

fn no_echo(center: f64, residual: f64) -> EchoRecord {
    EchoRecord { center, amplitude: 0.0, phase: 0.0, width: 0.0, residual, status: EchoStatus::NoEcho }
}

/// Fits a Gaussian to |trace| inside `[t_a, t_b]`.
pub fn extract_echo(trace: &Waveform, t_a: f64, t_b: f64, opts: EchoOptions) -> Result<EchoRecord> {
    let g = &trace.grid;
    if !(t_b > t_a) || t_a < g.t_start - 0.5 * g.dt || t_b > g.t_end() + 0.5 * g.dt {
        return Err(Error::WindowOutsideGrid { start: t_a, end: t_b, grid_start: g.t_start, grid_end: g.t_end() });
    }
    let i0 = g.index_at_or_after(t_a);
    let i1 = g.nearest_index(t_b).min(g.n_samples - 1);
    let mid = 0.5 * (t_a + t_b);
    if i1 < i0 + 4 {
        return Err(Error::invalid("window", "fewer than five samples"));
    }
    let t: Vec<f64> = (i0..=i1).map(|i| g.time(i)).collect();
    let y: Vec<f64> = trace.samples[i0..=i1].iter().map(|z| z.norm()).collect();
    let (ipk, &peak) = y.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap();
    if peak == 0.0 {
        return Ok(no_echo(mid, 0.0));
    }
    // σ guess from the half-maximum crossing around the peak.
    let mut lo = ipk;
    while lo > 0 && y[lo] > 0.5 * peak {
        lo -= 1;
    }
    let mut hi = ipk;
    while hi + 1 < y.len() && y[hi] > 0.5 * peak {
        hi += 1;
    }
    let sigma0 = ((t[hi] - t[lo]) / 2.3548).max(g.dt);
    let (tc, ts) = (t[ipk], sigma0);
    let fit = levenberg_marquardt(
        |p, out| {
            for ((o, &ti), &yi) in out.iter_mut().zip(&t).zip(&y) {
                let x = (ti - tc) / ts - p[1];
                *o = p[0] * (-0.5 * x * x / (p[2] * p[2])).exp() - yi / peak;
            }
        },
        &[1.0, 0.0, 1.0],
        t.len(),
        LmOptions { max_iterations: 200, ..LmOptions::default() },
    );
    let Ok(fit) = fit else {
        return Ok(no_echo(mid, peak));
    };
    let amplitude = fit.params[0] * peak;
    let center = tc + fit.params[1] * ts;
    let width = (fit.params[2] * ts).abs();
    let residual = fit.residual_norm * peak / (t.len() as f64).sqrt();
    let floor_ok = opts.floor.is_none_or(|f| amplitude > f);
    if !(amplitude > opts.min_snr * residual) || !floor_ok || center < t_a || center > t_b || width > (t_b - t_a) {
        return Ok(no_echo(mid, residual));
    }
    let mut acc = Complex64::new(0.0, 0.0);
    for (k, z) in trace.samples[i0..=i1].iter().enumerate() {
        if (t[k] - center).abs() <= width {
            acc += z * z.norm();
        }
    }
    Ok(EchoRecord { center, amplitude, phase: acc.arg(), width, residual, status: EchoStatus::Found })
}

/// Statistical floor of a dephased ensemble: 3/√n of the reference amplitude.
pub fn dephased_floor(n_spins: usize, reference: f64) -> f64 {
    3.0 * reference / (n_spins as f64).sqrt()
}

/// Local maxima of |trace| above `threshold` outside the excluded windows.
pub fn spurious_peaks(trace: &Waveform, excluded: &[(f64, f64)], threshold: f64) -> Vec<(f64, f64)> {
    let y: Vec<f64> = trace.samples.iter().map(|z| z.norm()).collect();
    let mut out = Vec::new();
    for i in 1..y.len().saturating_sub(1) {
        let t = trace.grid.time(i);
        if y[i] > threshold && y[i] >= y[i - 1] && y[i] > y[i + 1] && !excluded.iter().any(|&(a, b)| t >= a && t <= b) {
            out.push((t, y[i]));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayModel {
    /// √(A₀² e^{−2t/T₂} + K²).
    Silenced,
    /// √(A₀² e^{−2t/T₂} (1 − η)^N + K²).
    RepeatedEmission,
    /// A₀ exp(−(t/T)^β) + K.
    Stretched,
    /// A₀ exp(−t/T) + K.
    Single,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub model: DecayModel,
    /// T₂ (or T_M under decoupling) (s).
    pub time_constant: f64,
    pub a0: f64,
    pub k: f64,
    pub eta_em: Option<f64>,
    pub stretch: Option<f64>,
    pub residual_norm: f64,
}

impl DecayFit {
    pub fn eval(&self, t: f64, n: usize) -> f64 {
        let tc = self.time_constant;
        match self.model {
            DecayModel::Silenced | DecayModel::RepeatedEmission => {
                let loss = (1.0 - self.eta_em.unwrap_or(0.0)).powi(n as i32);
                (self.a0 * self.a0 * (-2.0 * t / tc).exp() * loss + self.k * self.k).sqrt()
            }
            DecayModel::Stretched => self.a0 * (-(t / tc).powf(self.stretch.unwrap_or(1.0))).exp() + self.k,
            DecayModel::Single => self.a0 * (-t / tc).exp() + self.k,
        }
    }
}

fn check_points(t: &[f64], a: &[f64], min: usize) -> Result<()> {
    if t.len() != a.len() {
        return Err(Error::invalid("points", "times and amplitudes differ in length"));
    }
    if t.len() < min {
        return Err(Error::invalid("points", format!("need at least {min} points, got {}", t.len())));
    }
    if a.iter().chain(t).any(|v| !v.is_finite()) {
        return Err(Error::invalid("points", "non-finite value"));
    }
    Ok(())
}

// Log-linear initial guess: (A₀, T).
fn exp_guess(t: &[f64], a: &[f64]) -> (f64, f64) {
    let pts: Vec<(f64, f64)> = t.iter().zip(a).filter(|(_, &y)| y > 0.0).map(|(&x, &y)| (x, y.ln())).collect();
    let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
    match linear_regression(&x, &y) {
        Some((c, b)) if b < 0.0 => (c.exp(), -1.0 / b),
        _ => (a.iter().cloned().fold(0.0, f64::max), t.iter().cloned().fold(0.0, f64::max).max(1e-12)),
    }
}

/// Echo amplitude decay `A(t) = √(A₀² e^{−2t/T₂} + K²)`.
pub fn fit_silenced_decay(t: &[f64], a: &[f64]) -> Result<DecayFit> {
    check_points(t, a, 4)?;
    let (a0, t2) = exp_guess(t, a);
    let ys = a.iter().cloned().fold(0.0, f64::max).max(1e-300);
    let rep = levenberg_marquardt(
        |p, out| {
            for ((o, &ti), &yi) in out.iter_mut().zip(t).zip(a) {
                let v = p[0] * p[0] * (-2.0 * ti / (p[1] * t2)).exp() + p[2] * p[2];
                *o = v.sqrt() - yi / ys;
            }
        },
        &[a0 / ys, 1.0, 1e-3],
        t.len(),
        LmOptions::default(),
    )?;
    let tc = rep.params[1] * t2;
    if !(tc > 0.0) {
        return Err(Error::DegenerateFit("non-positive T2".into()));
    }
    Ok(DecayFit {
        model: DecayModel::Silenced,
        time_constant: tc,
        a0: rep.params[0].abs() * ys,
        k: rep.params[2].abs() * ys,
        eta_em: None,
        stretch: None,
        residual_norm: rep.residual_norm * ys,
    })
}

/// Single (`stretched = false`) or stretched exponential with offset.
pub fn fit_exponential_decay(t: &[f64], a: &[f64], stretched: bool) -> Result<DecayFit> {
    check_points(t, a, if stretched { 5 } else { 4 })?;
    let (a0, tc0) = exp_guess(t, a);
    let ys = a.iter().cloned().fold(0.0, f64::max).max(1e-300);
    let model = move |p: &[f64], ti: f64| {
        let beta = if stretched { p[3] } else { 1.0 };
        p[0] * (-(ti / (p[1] * tc0)).abs().powf(beta)).exp() + p[2]
    };
    let mut p0 = vec![a0 / ys, 1.0, 0.0];
    if stretched {
        p0.push(1.0);
    }
    let rep = levenberg_marquardt(
        |p, out| {
            for ((o, &ti), &yi) in out.iter_mut().zip(t).zip(a) {
                *o = model(p, ti) - yi / ys;
            }
        },
        &p0,
        t.len(),
        LmOptions::default(),
    )?;
    Ok(DecayFit {
        model: if stretched { DecayModel::Stretched } else { DecayModel::Single },
        time_constant: rep.params[1] * tc0,
        a0: rep.params[0] * ys,
        k: rep.params[2] * ys,
        eta_em: None,
        stretch: stretched.then(|| rep.params[3]),
        residual_norm: rep.residual_norm * ys,
    })
}

/// One-parameter fit of the emitted fraction η_em per echo.
///
/// `echo_index[i]` is the number of echoes emitted before point i. A₀, K and
/// the time constant come from `base` (a silenced-decay fit).
pub fn fit_emission_decay(t: &[f64], a: &[f64], echo_index: &[usize], base: &DecayFit) -> Result<DecayFit> {
    check_points(t, a, 2)?;
    if echo_index.len() != t.len() {
        return Err(Error::invalid("echo_index", "length differs from the points"));
    }
    if !(base.time_constant > 0.0) {
        return Err(Error::invalid("time_constant", "T2 must be positive"));
    }
    let ys = a.iter().cloned().fold(0.0, f64::max).max(1e-300);
    let (a0, k, tc) = (base.a0, base.k, base.time_constant);
    let residuals = |p: &[f64], out: &mut [f64]| {
        let keep = 1.0 - p[0];
        for i in 0..t.len() {
            let v = a0 * a0 * (-2.0 * t[i] / tc).exp() * keep.abs().powi(echo_index[i] as i32) + k * k;
            out[i] = (v.sqrt() - a[i]) / ys;
        }
    };
    // Coarse scan keeps LM away from the (1 − η)^N sign-flip branch.
    let mut best = (f64::INFINITY, 0.0);
    let mut r = vec![0.0; t.len()];
    for s in 0..=100 {
        let eta = s as f64 / 100.0;
        residuals(&[eta], &mut r);
        let c: f64 = r.iter().map(|x| x * x).sum();
        if c < best.0 {
            best = (c, eta);
        }
    }
    let rep = levenberg_marquardt(residuals, &[best.1.clamp(1e-3, 0.999)], t.len(), LmOptions::default())?;
    let eta = rep.params[0].clamp(0.0, 1.0);
    Ok(DecayFit {
        model: DecayModel::RepeatedEmission,
        time_constant: tc,
        a0,
        k,
        eta_em: Some(eta),
        stretch: None,
        residual_norm: rep.residual_norm * ys,
    })
}

/// Adiabaticity factor Q_min = 2πν²/|R| for peak Rabi ν (Hz) and rate R (Hz/s).
pub fn adiabaticity_q(nu: f64, rate: f64) -> Result<f64> {
    if rate == 0.0 || !rate.is_finite() {
        return Err(Error::invalid("chirp rate", "must be non-zero and finite"));
    }
    Ok(TAU * nu * nu / rate.abs())
}

/// Rabi frequency at which Q_min = 1 for chirp rate R: the lower amplitude
/// bound of the usable WURST region.
pub fn adiabatic_amplitude_bound(rate: f64) -> f64 {
    (rate.abs() / TAU).sqrt()
}

/// Undoes emission loss and storage decay: `A e^{iφ} / (η² e^{−t/T_M})`.
pub fn rescale_retrieved(echo: &EchoRecord, eta_em: f64, t_m: f64, storage_time: f64) -> Result<Complex64> {
    let decay = if t_m.is_infinite() { 1.0 } else { (-storage_time / t_m).exp() };
    let den = eta_em * eta_em * decay;
    if !(den > 0.0) || !den.is_finite() {
        return Err(Error::ZeroDenominator("eta_em² · exp(−t/T_M)"));
    }
    Ok(echo.phasor() / den)
}

/// Single-spin coupling from the Purcell-limited lifetime, `√(κ/(4T₁))`,
/// with κ the HWHM linewidth in Hz.
pub fn purcell_g0(t1: f64, kappa_hwhm: f64) -> Result<f64> {
    if !(t1 > 0.0 && kappa_hwhm > 0.0) {
        return Err(Error::invalid("T1/kappa", "must be positive"));
    }
    Ok((kappa_hwhm / (4.0 * t1)).sqrt())
}

/// Intracavity photon number for Rabi frequency Ω = 2g₀√n.
pub fn photon_number(omega: f64, g0: f64) -> Result<f64> {
    if !(g0 > 0.0) {
        return Err(Error::invalid("g0", "must be positive"));
    }
    Ok((omega / (2.0 * g0)).powi(2))
}

/// √(2 ln 100): half width at one hundredth of the maximum, in units of σ.
pub fn hundredth_max_factor() -> f64 {
    (2.0 * 100f64.ln()).sqrt()
}

/// Ridge width σ_R(R, A) = c₀ + c_R·R + c_A·A (Hz/s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WidthPlane {
    pub c0: f64,
    pub c_r: f64,
    pub c_a: f64,
}

impl WidthPlane {
    pub fn constant(sigma: f64) -> Self {
        Self { c0: sigma, c_r: 0.0, c_a: 0.0 }
    }

    pub fn at(&self, r: f64, a: f64) -> f64 {
        self.c0 + self.c_r * r + self.c_a * a
    }
}

/// Lines of equivalent pulses `A = A₁ + C ln(R/R₁)` with a finite width in R.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceModel {
    pub gradient_c: f64,
    pub width: WidthPlane,
}

impl EquivalenceModel {
    /// R on the ridge through `a` at amplitude `amp`.
    pub fn ridge_rate(&self, a: &WurstParams, amp: f64) -> f64 {
        let r = a.chirp_rate().abs();
        if self.gradient_c == 0.0 {
            return r;
        }
        r * ((amp - a.amplitude) / self.gradient_c).exp()
    }

    /// `b` lies within the hundredth-max half-width of the ridge through `a`.
    pub fn equivalent(&self, a: &WurstParams, b: &WurstParams) -> bool {
        if a.chirp != b.chirp || (a.duration - b.duration).abs() > 1e-12 * a.duration {
            return false;
        }
        let r_ridge = self.ridge_rate(a, b.amplitude);
        let half = self.width.at(r_ridge, b.amplitude).abs() * hundredth_max_factor();
        (b.chirp_rate().abs() - r_ridge).abs() < half
    }
}

/// Echo amplitude of an A–B pulse pair against |R_B| at fixed B amplitude.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeProfile {
    /// |R| of the reference pulse A (Hz/s).
    pub r_ref: f64,
    pub a_ref: f64,
    /// Amplitude of B along this profile.
    pub a_b: f64,
    pub r_b: Vec<f64>,
    pub echo: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RidgeFit {
    pub r_ref: f64,
    pub a_ref: f64,
    pub a_b: f64,
    pub center: f64,
    pub sigma: f64,
    pub peak: f64,
    pub baseline: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeMapParams {
    /// Amplitude of the partitioned cut.
    pub amplitude: f64,
    /// Usable |R| range (Hz/s).
    pub r_min: f64,
    pub r_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeMap {
    pub params: ModeMapParams,
    pub ridges: Vec<RidgeFit>,
    pub model: EquivalenceModel,
    /// Cell edges along the cut; cell k is [edges[k], edges[k+1]).
    pub edges: Vec<f64>,
    /// Distinct modes per chirp direction.
    pub count: usize,
    /// Both chirp directions.
    pub count_both_signs: usize,
}

/// Fits a Gaussian-plus-baseline ridge to one profile.
pub fn fit_ridge(p: &RidgeProfile) -> Result<RidgeFit> {
    let n = p.r_b.len();
    if n != p.echo.len() {
        return Err(Error::invalid("profile", "r_b and echo differ in length"));
    }
    if n < 5 {
        return Err(Error::SweepTooSparse(format!("profile at A = {} has {n} points", p.a_b)));
    }
    let (ipk, &peak) = p.echo.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap();
    let base = p.echo.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(peak > base) {
        return Err(Error::SweepTooSparse("flat profile".into()));
    }
    let half = base + 0.5 * (peak - base);
    let mut lo = ipk;
    while lo > 0 && p.echo[lo] > half {
        lo -= 1;
    }
    let mut hi = ipk;
    while hi + 1 < n && p.echo[hi] > half {
        hi += 1;
    }
    let (rc, rs) = (p.r_b[ipk], ((p.r_b[hi] - p.r_b[lo]) / 2.3548).abs().max(1e-9 * p.r_b[ipk].abs()));
    let ys = peak;
    let rep = levenberg_marquardt(
        |q, out| {
            for ((o, &r), &y) in out.iter_mut().zip(&p.r_b).zip(&p.echo) {
                let x = (r - rc) / rs - q[1];
                *o = q[0] * (-0.5 * x * x / (q[2] * q[2])).exp() + q[3] - y / ys;
            }
        },
        &[(peak - base) / ys, 0.0, 1.0, base / ys],
        n,
        LmOptions::default(),
    )?;
    let sigma = (rep.params[2] * rs).abs();
    let center = rc + rep.params[1] * rs;
    let inside = p.r_b.iter().filter(|&&r| (r - center).abs() <= 2.0 * sigma).count();
    if inside < 4 {
        return Err(Error::SweepTooSparse(format!(
            "ridge at A = {} resolved by {inside} points within ±2σ",
            p.a_b
        )));
    }
    Ok(RidgeFit {
        r_ref: p.r_ref,
        a_ref: p.a_ref,
        a_b: p.a_b,
        center,
        sigma,
        peak: rep.params[0] * ys,
        baseline: rep.params[3] * ys,
    })
}

fn fit_width_plane(r: &[RidgeFit]) -> WidthPlane {
    let n = r.len();
    let design = |cols: usize| {
        DMatrix::from_fn(n, cols, |i, j| match j {
            0 => 1.0,
            1 => r[i].center,
            _ => r[i].a_b,
        })
    };
    let y = DVector::from_iterator(n, r.iter().map(|f| f.sigma));
    for cols in [3usize, 2] {
        if n < cols + 1 {
            continue;
        }
        let x = design(cols);
        // Column scaling keeps the normal equations well conditioned.
        let scale: Vec<f64> = (0..cols).map(|j| x.column(j).amax().max(1e-300)).collect();
        let xs = DMatrix::from_fn(n, cols, |i, j| x[(i, j)] / scale[j]);
        let svd = xs.clone().svd(true, true);
        let smax = svd.singular_values.max();
        if svd.singular_values.min() < 1e-8 * smax {
            continue;
        }
        if let Ok(c) = svd.solve(&y, 1e-12) {
            return WidthPlane {
                c0: c[0] / scale[0],
                c_r: c[1] / scale[1],
                c_a: if cols == 3 { c[2] / scale[2] } else { 0.0 },
            };
        }
    }
    WidthPlane::constant(r.iter().map(|f| f.sigma).sum::<f64>() / n as f64)
}

/// Partitions [r_min, r_max] into cells one hundredth-max half-width apart.
pub fn partition(width: &WidthPlane, params: &ModeMapParams) -> Result<Vec<f64>> {
    let mut edges = vec![params.r_min];
    let f = hundredth_max_factor();
    loop {
        let r = *edges.last().unwrap();
        let step = width.at(r, params.amplitude) * f;
        if !(step > 0.0) {
            return Err(Error::DegenerateFit(format!("ridge width {step} at R = {r} is not positive")));
        }
        if r + step > params.r_max * (1.0 + 1e-12) {
            break;
        }
        edges.push(r + step);
        if edges.len() > 100_000 {
            return Err(Error::DegenerateFit("ridge width too small to partition".into()));
        }
    }
    Ok(edges)
}

/// Equivalence-line gradient, ridge width and the cell count of a sweep.
pub fn mode_map(profiles: &[RidgeProfile], params: ModeMapParams) -> Result<ModeMap> {
    if !(params.r_max > params.r_min && params.r_min > 0.0) {
        return Err(Error::invalid("r range", "need 0 < r_min < r_max"));
    }
    if profiles.is_empty() {
        return Err(Error::SweepTooSparse("no profiles".into()));
    }
    let ridges = profiles.iter().map(fit_ridge).collect::<Result<Vec<_>>>()?;
    // A − A_ref = C ln(R*/R_ref), least squares through the origin.
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for r in &ridges {
        let x = (r.center / r.r_ref).ln();
        sxy += x * (r.a_b - r.a_ref);
        sxx += x * x;
    }
    let gradient_c = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let width = fit_width_plane(&ridges);
    let edges = partition(&width, &params)?;
    let count = edges.len() - 1;
    Ok(ModeMap {
        params,
        ridges,
        model: EquivalenceModel { gradient_c, width },
        edges,
        count,
        count_both_signs: 2 * count,
    })
}

/// Gaussian FWHM from σ.
pub fn fwhm_from_sigma(sigma: f64) -> f64 {
    sigma * (8.0 * 2f64.ln()).sqrt()
}

/// Wraps an angle into (−π, π].
pub fn wrap_phase(x: f64) -> f64 {
    let y = x.rem_euclid(TAU);
    if y > PI {
        y - TAU
    } else {
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::waveforms::{ChirpSign, TimeGrid};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn gaussian_trace(c: f64, amp: f64, sigma: f64, phase: f64) -> Waveform {
        let g = TimeGrid::new(0.0, 50e-9, 4000).unwrap();
        let s = (0..g.n_samples)
            .map(|i| {
                let x = g.time(i) - c;
                Complex64::from_polar(amp * (-0.5 * x * x / (sigma * sigma)).exp(), phase)
            })
            .collect();
        Waveform::from_samples(g, s).unwrap()
    }

    #[test]
    fn echo_round_trip() {
        let w = gaussian_trace(100e-6, 0.3, 2e-6, 1.1);
        let e = extract_echo(&w, 80e-6, 120e-6, EchoOptions::default()).unwrap();
        assert!(e.found());
        assert!((e.center - 100e-6).abs() < 1e-3 * 2e-6);
        assert!((e.amplitude / 0.3 - 1.0).abs() < 1e-3);
        assert!((e.width / 2e-6 - 1.0).abs() < 1e-3);
        assert!((e.phase - 1.1).abs() < 1e-9);
    }

    #[test]
    fn pure_noise_is_no_echo() {
        let g = TimeGrid::new(0.0, 50e-9, 2000).unwrap();
        let n = Normal::new(0.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = (0..g.n_samples).map(|_| Complex64::new(n.sample(&mut rng), n.sample(&mut rng))).collect();
        let w = Waveform::from_samples(g, s).unwrap();
        let e = extract_echo(&w, 10e-6, 90e-6, EchoOptions::default()).unwrap();
        assert_eq!(e.status, EchoStatus::NoEcho);
        assert_eq!(e.amplitude, 0.0);
    }

    #[test]
    fn window_must_be_inside() {
        let w = gaussian_trace(100e-6, 0.3, 2e-6, 0.0);
        assert!(extract_echo(&w, 150e-6, 250e-6, EchoOptions::default()).is_err());
    }

    #[test]
    fn silenced_decay_round_trip() {
        let t: Vec<f64> = (0..12).map(|i| i as f64 * 0.4e-3).collect();
        let truth = DecayFit {
            model: DecayModel::Silenced,
            time_constant: 2.0e-3,
            a0: 1.3,
            k: 0.05,
            eta_em: None,
            stretch: None,
            residual_norm: 0.0,
        };
        let a: Vec<f64> = t.iter().map(|&x| truth.eval(x, 0)).collect();
        let f = fit_silenced_decay(&t, &a).unwrap();
        assert!((f.time_constant / 2e-3 - 1.0).abs() < 1e-3);
        assert!((f.a0 / 1.3 - 1.0).abs() < 1e-3);
        assert!((f.k / 0.05 - 1.0).abs() < 1e-3);
        assert!(fit_silenced_decay(&t[..3], &a[..3]).is_err());
    }

    #[test]
    fn silenced_decay_pure_exponential() {
        let t: Vec<f64> = (0..10).map(|i| i as f64 * 0.2e-3).collect();
        let a: Vec<f64> = t.iter().map(|&x| 0.8 * (-x / 0.7e-3).exp()).collect();
        let f = fit_silenced_decay(&t, &a).unwrap();
        assert!((f.time_constant / 0.7e-3 - 1.0).abs() < 1e-6);
        assert!(f.k < 1e-6);
    }

    #[test]
    fn single_and_stretched_round_trip() {
        let t: Vec<f64> = (0..20).map(|i| i as f64 * 0.1e-3).collect();
        let a: Vec<f64> = t.iter().map(|&x| 2.0 * (-(x / 0.6e-3).powf(1.4)).exp() + 0.1).collect();
        let f = fit_exponential_decay(&t, &a, true).unwrap();
        assert!((f.time_constant / 0.6e-3 - 1.0).abs() < 1e-3);
        assert!((f.stretch.unwrap() - 1.4).abs() < 1e-3);
        let b: Vec<f64> = t.iter().map(|&x| 2.0 * (-x / 0.6e-3).exp() + 0.1).collect();
        let g = fit_exponential_decay(&t, &b, false).unwrap();
        assert!((g.time_constant / 0.6e-3 - 1.0).abs() < 1e-3 && (g.k - 0.1).abs() < 1e-4);
    }

    #[test]
    fn emission_decay() {
        let base = DecayFit {
            model: DecayModel::Silenced,
            time_constant: 2e-3,
            a0: 1.0,
            k: 0.02,
            eta_em: None,
            stretch: None,
            residual_norm: 0.0,
        };
        let t: Vec<f64> = (0..8).map(|i| 0.3e-3 * (i + 1) as f64).collect();
        let n: Vec<usize> = (0..8).collect();
        for eta in [0.0, 0.17, 0.4] {
            let truth = DecayFit { eta_em: Some(eta), ..base };
            let a: Vec<f64> = t.iter().zip(&n).map(|(&x, &k)| truth.eval(x, k)).collect();
            let f = fit_emission_decay(&t, &a, &n, &base).unwrap();
            assert!((f.eta_em.unwrap() - eta).abs() < 1e-3, "eta {eta}: {:?}", f.eta_em);
        }
    }

    #[test]
    fn adiabaticity_values() {
        assert_eq!(adiabaticity_q(0.0, 2e10).unwrap(), 0.0);
        let q = adiabaticity_q(125e3, 2e10).unwrap();
        assert!((q - 4.909).abs() < 1e-3, "{q}");
        assert!(adiabaticity_q(1.0, 0.0).is_err());
        let nu = adiabatic_amplitude_bound(2e10);
        assert!((adiabaticity_q(nu, 2e10).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rescale_cases() {
        let e = EchoRecord { center: 0.0, amplitude: 0.5, phase: 0.3, width: 1e-6, residual: 0.0, status: EchoStatus::Found };
        assert!((rescale_retrieved(&e, 1.0, f64::INFINITY, 1e-3).unwrap() - e.phasor()).norm() < 1e-15);
        let r = rescale_retrieved(&e, 1.0, 2e-3, 2e-3).unwrap();
        assert!((r.norm() / 0.5 - std::f64::consts::E).abs() < 1e-12);
        assert!(matches!(rescale_retrieved(&e, 0.0, 1.0, 0.0), Err(Error::ZeroDenominator(_))));
    }

    #[test]
    fn purcell_and_photons() {
        let g0 = purcell_g0(14.7, 400e3).unwrap();
        assert!((g0 - 80.0).abs() < 5.0, "{g0}");
        assert_eq!(photon_number(2.0 * 80.0, 80.0).unwrap(), 1.0);
        let n = photon_number(125e3, 80.0).unwrap();
        assert!((n / 6.1e5 - 1.0).abs() < 0.01);
        assert!((n / 5.7e5 - 1.0).abs() < 0.5);
    }

    fn synthetic_profile(r_ref: f64, a_ref: f64, a_b: f64, c: f64, sigma: f64, pts: usize) -> RidgeProfile {
        let center = r_ref * ((a_b - a_ref) / c).exp();
        let r_b: Vec<f64> = (0..pts).map(|i| center + (i as f64 / (pts - 1) as f64 - 0.5) * 12.0 * sigma).collect();
        let echo = r_b.iter().map(|r| (-0.5 * ((r - center) / sigma).powi(2)).exp() + 0.01).collect();
        RidgeProfile { r_ref, a_ref, a_b, r_b, echo }
    }

    #[test]
    fn mode_map_recovers_gradient_and_counts_cells() {
        let sigma = 0.5e9;
        let c = 80e3;
        let mut profiles = Vec::new();
        for r_ref in [5e9, 10e9, 15e9] {
            for a_b in [180e3, 200e3, 220e3] {
                profiles.push(synthetic_profile(r_ref, 200e3, a_b, c, sigma, 41));
            }
        }
        let params = ModeMapParams { amplitude: 200e3, r_min: 2e9, r_max: 20e9 };
        let m = mode_map(&profiles, params).unwrap();
        assert!((m.model.gradient_c / c - 1.0).abs() < 1e-3);
        let sep = sigma * hundredth_max_factor();
        assert_eq!(m.count, ((params.r_max - params.r_min) / sep).floor() as usize);
        assert_eq!(m.count_both_signs, 2 * m.count);
    }

    #[test]
    fn sparse_sweep_is_rejected() {
        let p = synthetic_profile(5e9, 200e3, 200e3, 80e3, 0.5e9, 41);
        let sparse = RidgeProfile {
            r_b: p.r_b.iter().step_by(10).cloned().collect(),
            echo: p.echo.iter().step_by(10).cloned().collect(),
            ..p
        };
        assert!(matches!(fit_ridge(&sparse), Err(Error::SweepTooSparse(_))));
    }

    #[test]
    fn equivalence_predicate() {
        let m = EquivalenceModel { gradient_c: 80e3, width: WidthPlane::constant(0.3e9) };
        let a = WurstParams::from_rate(10e9, 100e-6, 200e3).unwrap();
        let along = WurstParams::from_rate(10e9 * (20e3f64 / 80e3).exp(), 100e-6, 220e3).unwrap();
        assert!(m.equivalent(&a, &along));
        let off = WurstParams::from_rate(13e9, 100e-6, 200e3).unwrap();
        assert!(!m.equivalent(&a, &off));
        let flipped = WurstParams { chirp: ChirpSign::Down, ..a };
        assert!(!m.equivalent(&a, &flipped));
    }

    #[test]
    fn spurious_peak_scan() {
        let w = gaussian_trace(100e-6, 0.3, 2e-6, 0.0);
        assert_eq!(spurious_peaks(&w, &[], 0.1).len(), 1);
        assert!(spurious_peaks(&w, &[(90e-6, 110e-6)], 0.1).is_empty());
        assert_eq!(dephased_floor(10_000, 1.0), 0.03);
    }

    #[test]
    fn phase_wrapping() {
        assert!((wrap_phase(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_phase(-0.5) + 0.5).abs() < 1e-15);
    }
}
