// Copyright 2026 The chirpmem Authors
// SPDX-License-Identifier: Apache-2.0

//! Resonator model: input-output filtering of drives, the Fano transmission
//! lineshape, dispersive spin-cavity curves and cooperativity.
//!
//! Linewidths (`kappa`, `kappa_c`, `gamma`) are FWHM in Hz everywhere in this
//! module's public surface. The conversion to the field decay rate happens in
//! [`decay_rate`] and nowhere else.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::fit::{levenberg_marquardt, linear_regression, LmOptions};
use crate::rk4;
use crate::units::{angular, fwhm_to_amplitude_decay};
use crate::waveforms::{Waveform, WurstParams};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResonatorParams {
    /// Center frequency (Hz).
    pub f0: f64,
    /// Loaded linewidth, FWHM (Hz).
    pub kappa: f64,
    /// Coupling linewidth, FWHM (Hz).
    pub kappa_c: f64,
    /// Fano modulation scale K.
    #[serde(default = "one")]
    pub fano_k: f64,
    /// Fano asymmetry q.
    #[serde(default)]
    pub fano_q: f64,
    /// Background slope m (per Hz).
    #[serde(default)]
    pub slope: f64,
    /// Background offset c.
    #[serde(default)]
    pub offset: f64,
}

fn one() -> f64 {
    1.0
}

impl ResonatorParams {
    pub fn new(f0: f64, kappa: f64, kappa_c: f64) -> Result<Self> {
        let r = Self {
            f0,
            kappa,
            kappa_c,
            fano_k: 1.0,
            fano_q: 0.0,
            slope: 0.0,
            offset: 0.0,
        };
        r.validate()?;
        Ok(r)
    }

    /// Resonator with `κ = f₀ / Q`, critically over-coupled (`κ_C = κ`).
    pub fn from_quality_factor(f0: f64, q: f64) -> Result<Self> {
        Self::new(f0, f0 / q, f0 / q)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err(Error::invalid("kappa", format!("must be positive, got {}", self.kappa)));
        }
        if !(self.kappa_c > 0.0 && self.kappa_c <= self.kappa * (1.0 + 1e-12)) {
            return Err(Error::invalid(
                "kappa_c",
                format!("must satisfy 0 < kappa_c <= kappa, got {} (kappa {})", self.kappa_c, self.kappa),
            ));
        }
        Ok(())
    }

    pub fn quality_factor(&self) -> f64 {
        self.f0 / self.kappa
    }

    /// Field amplitude decay rate κ_angular/2 (1/s).
    pub fn decay_rate(&self) -> f64 {
        decay_rate(self.kappa)
    }

    /// Steady-state gain 2√κ_C/κ of the input-output filter (angular units).
    pub fn dc_gain(&self) -> f64 {
        2.0 * angular(self.kappa_c).sqrt() / angular(self.kappa)
    }

    /// Group delay of the filter at the cavity center, 2/κ_angular (s).
    pub fn group_delay(&self) -> f64 {
        1.0 / self.decay_rate()
    }
}

/// FWHM linewidth (Hz) to field amplitude decay rate (1/s).
pub fn decay_rate(kappa_fwhm: f64) -> f64 {
    fwhm_to_amplitude_decay(kappa_fwhm)
}

fn filter_with(input: &Waveform, r: &ResonatorParams, gain: f64) -> Result<Waveform> {
    r.validate()?;
    let bound = 1.0 / (20.0 * r.kappa);
    if input.grid.dt > bound * (1.0 + 1e-9) {
        return Err(Error::GridTooCoarse {
            dt: input.grid.dt,
            bound,
            what: "cavity filter requires dt <= 1/(20 κ)",
        });
    }
    let drive = gain * angular(r.kappa_c).sqrt();
    let decay = r.decay_rate();
    let h = input.grid.dt;
    let s = &input.samples;
    let mut out = Vec::with_capacity(s.len());
    let mut x = Complex64::new(0.0, 0.0);
    out.push(x);
    for i in 0..s.len() - 1 {
        x = rk4::step_driven(x, h, s[i], rk4::midpoint(s, i), s[i + 1], |u, y| u * drive - y * decay);
        out.push(x);
    }
    Waveform::from_samples(input.grid, out)
}

/// Intracavity field quadratures X + iY driven by the input quadratures I + iQ:
/// `Ẋ = √κ_C I − (κ/2) X` in angular units, from `X = Y = 0`.
///
/// Integrates over the whole input grid, so ring-down after the drive is kept.
pub fn cavity_filter(input: &Waveform, r: &ResonatorParams) -> Result<Waveform> {
    filter_with(input, r, 1.0)
}

/// [`cavity_filter`] rescaled to unit steady-state gain.
///
/// This is the drive the spins see: a resonant drive of amplitude Ω keeps
/// Rabi frequency Ω once the cavity has filled.
pub fn intracavity_drive(input: &Waveform, r: &ResonatorParams) -> Result<Waveform> {
    filter_with(input, r, 1.0 / r.dc_gain())
}

/// Time the chirp spends inside the cavity linewidth, κ·T_W/Γ_W.
pub fn effective_wurst_duration(p: &WurstParams, r: &ResonatorParams) -> Result<f64> {
    if p.bandwidth < r.kappa {
        return Err(Error::BandwidthBelowLinewidth {
            bandwidth: p.bandwidth,
            kappa: r.kappa,
        });
    }
    Ok(r.kappa * p.duration / p.bandwidth)
}

/// Frequency-resolution ceiling on the WURST bandwidth, κ²·T_W (Hz).
pub fn max_wurst_bandwidth(kappa: f64, duration: f64) -> f64 {
    kappa * kappa * duration
}

/// Breit-Wigner-Fano magnitude `K(qκ/2 + f − f₀)/(κ²/4 + (f − f₀)²) + m f + c`.
pub fn fano_transmission(freqs: &[f64], r: &ResonatorParams) -> Vec<f64> {
    freqs.iter().map(|&f| fano_point(f, r)).collect()
}

fn fano_point(f: f64, r: &ResonatorParams) -> f64 {
    let x = f - r.f0;
    r.fano_k * (r.fano_q * r.kappa / 2.0 + x) / (r.kappa * r.kappa / 4.0 + x * x) + r.slope * f + r.offset
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FanoFit {
    pub params: ResonatorParams,
    pub residual_norm: f64,
    pub iterations: usize,
}

// Normalized coordinates: x = (f − f_ref)/w, y/s_y.
struct FanoScaling {
    f_ref: f64,
    w: f64,
    sy: f64,
}

impl FanoScaling {
    fn to_normal(&self, r: &ResonatorParams) -> [f64; 6] {
        [
            r.fano_k / (self.w * self.sy),
            r.fano_q,
            (r.f0 - self.f_ref) / self.w,
            r.kappa / self.w,
            r.slope * self.w / self.sy,
            (r.slope * self.f_ref + r.offset) / self.sy,
        ]
    }

    fn from_normal(&self, p: &[f64], template: &ResonatorParams) -> ResonatorParams {
        let slope = p[4] * self.sy / self.w;
        ResonatorParams {
            fano_k: p[0] * self.w * self.sy,
            fano_q: p[1],
            f0: self.f_ref + p[2] * self.w,
            kappa: p[3].abs() * self.w,
            slope,
            offset: p[5] * self.sy - slope * self.f_ref,
            ..*template
        }
    }
}

/// Least-squares Fano fit starting from an explicit initial guess.
pub fn fit_fano_from(freqs: &[f64], mags: &[f64], initial: &ResonatorParams) -> Result<FanoFit> {
    if freqs.len() != mags.len() {
        return Err(Error::invalid("magnitudes", "length differs from frequencies"));
    }
    if freqs.len() < 7 {
        return Err(Error::invalid("freqs", format!("need at least 7 points, got {}", freqs.len())));
    }
    let sy = mags.iter().map(|m| m.abs()).fold(0.0, f64::max).max(1e-300);
    let scaling = FanoScaling { f_ref: initial.f0, w: initial.kappa, sy };
    let xs: Vec<f64> = freqs.iter().map(|f| (f - scaling.f_ref) / scaling.w).collect();
    let ys: Vec<f64> = mags.iter().map(|m| m / sy).collect();
    let p0 = scaling.to_normal(initial);
    let rep = levenberg_marquardt(
        |p, out| {
            let (k, q, x0, kap, m, c) = (p[0], p[1], p[2], p[3], p[4], p[5]);
            for (o, (&x, &y)) in out.iter_mut().zip(xs.iter().zip(&ys)) {
                let d = x - x0;
                *o = k * (q * kap / 2.0 + d) / (kap * kap / 4.0 + d * d) + m * x + c - y;
            }
        },
        &p0,
        xs.len(),
        LmOptions::default(),
    )?;
    Ok(FanoFit {
        params: scaling.from_normal(&rep.params, initial),
        residual_norm: rep.residual_norm * sy,
        iterations: rep.iterations,
    })
}

/// Initial Fano parameters from the extremum locations and their ratio.
pub fn guess_fano(freqs: &[f64], mags: &[f64]) -> Result<ResonatorParams> {
    let n = freqs.len();
    if n < 7 || mags.len() != n {
        return Err(Error::invalid("freqs", format!("need at least 7 paired points, got {n}")));
    }
    let edge = (n / 10).max(2);
    let (bx, by): (Vec<f64>, Vec<f64>) = freqs[..edge]
        .iter()
        .chain(&freqs[n - edge..])
        .zip(mags[..edge].iter().chain(&mags[n - edge..]))
        .map(|(&f, &m)| (f, m))
        .unzip();
    let (c, m) = linear_regression(&bx, &by).unwrap_or((mags[0], 0.0));
    let detrended: Vec<f64> = freqs.iter().zip(mags).map(|(&f, &y)| y - (c + m * f)).collect();
    let (i_max, &v_max) = detrended
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .unwrap();
    let (i_min, &v_min) = detrended
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .unwrap();
    let scale = mags.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if v_max - v_min <= 1e-9 * scale.max(1e-300) || i_max == i_min {
        return Err(Error::DegenerateFit("no resonance modulation above the background".into()));
    }
    // K > 0 puts the maximum at x₊ > 0 (right of the minimum).
    let (sign, x_plus, x_minus, rho) = if freqs[i_max] > freqs[i_min] {
        (1.0, freqs[i_max], freqs[i_min], v_max / v_min.abs().max(1e-300))
    } else {
        (-1.0, freqs[i_min], freqs[i_max], v_min.abs() / v_max.abs().max(1e-300))
    };
    let half = 0.5 * (x_plus - x_minus);
    let a = half * (rho - 1.0) / (rho + 1.0);
    let b = (half * half - a * a).max(1e-6 * half * half).sqrt();
    let kappa = 2.0 * b;
    let f0 = 0.5 * (x_plus + x_minus) + a;
    let xp = x_plus - f0;
    let peak = if sign > 0.0 { v_max } else { v_min };
    let span = freqs[n - 1] - freqs[0];
    if span.abs() < 5.0 * kappa {
        return Err(Error::invalid(
            "freqs",
            format!("span {span:e} Hz is below 5 κ ≈ {:e} Hz", 5.0 * kappa),
        ));
    }
    Ok(ResonatorParams {
        f0,
        kappa,
        kappa_c: kappa,
        fano_k: 2.0 * xp * peak,
        fano_q: a / b,
        slope: m,
        offset: c,
    })
}

pub fn fit_fano(freqs: &[f64], mags: &[f64]) -> Result<FanoFit> {
    let guess = guess_fano(freqs, mags)?;
    let fit = fit_fano_from(freqs, mags, &guess)?;
    if fit.params.fano_k.abs() < 1e-12 * guess.fano_k.abs() {
        return Err(Error::DegenerateFit("fitted modulation K vanished".into()));
    }
    Ok(fit)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpinCavityCoupling {
    /// Ensemble coupling g_ens (Hz).
    pub g_ens: f64,
    /// Spin linewidth γ, FWHM (Hz).
    pub gamma: f64,
    /// Field at which spins and resonator are resonant (T).
    pub b_res: f64,
    /// Spin tuning df/dB (Hz/T).
    pub df_db: f64,
}

/// Dispersive frequency pull and linewidth broadening versus field.
///
/// `f = f₀ − g²Δ/(Δ² + γ²/4)`, `κ = κ₀ + g²(γ/2)/(Δ² + γ²/4)`, with
/// `Δ = (B − B_R)·df/dB`; all quantities in Hz.
pub fn dispersive_curves(fields: &[f64], c: &SpinCavityCoupling, r: &ResonatorParams) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(c.gamma > 0.0) {
        return Err(Error::invalid("gamma", "spin linewidth must be positive"));
    }
    let g2 = c.g_ens * c.g_ens;
    let q = c.gamma * c.gamma / 4.0;
    Ok(fields
        .iter()
        .map(|&b| {
            let delta = (b - c.b_res) * c.df_db;
            let den = delta * delta + q;
            (r.f0 - g2 * delta / den, r.kappa + g2 * (c.gamma / 2.0) / den)
        })
        .unzip())
}

/// Cooperativity `C = 4 g_ens² / (κ γ)` with FWHM linewidths.
pub fn cooperativity(c: &SpinCavityCoupling, r: &ResonatorParams) -> Result<f64> {
    if !(r.kappa > 0.0 && c.gamma > 0.0) {
        return Err(Error::invalid("kappa/gamma", "linewidths must be positive"));
    }
    Ok(4.0 * c.g_ens * c.g_ens / (r.kappa * c.gamma))
}

/// One-way transfer efficiency `η_em = 4C/(1 + C)²`.
pub fn one_way_efficiency(c: f64) -> Result<f64> {
    if !(c >= 0.0) {
        return Err(Error::invalid("cooperativity", format!("must be non-negative, got {c}")));
    }
    Ok(4.0 * c / ((1.0 + c) * (1.0 + c)))
}
