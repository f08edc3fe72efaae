// Copyright 2026 The chirpmem Authors
// SPDX-License-Identifier: Apache-2.0

//! Mode map: AB-echo profiles against |R_B| for a few reference pulses at two
//! B amplitudes, fitted to equivalence ridges and partitioned into cells.
//!
//! Each reference gets its own probe ensemble, truncated well inside the
//! narrowest B band of its sweep. Spins outside a band are not inverted by
//! both pulses and would add a flat background to every profile.

use chirpmem::analysis::{adiabatic_amplitude_bound, mode_map, ModeMap, ModeMapParams, RidgeProfile};
use chirpmem::ensemble::{
    hard_pulse, sample_ensemble, CouplingDist, DetuningDist, EnsembleSpec, EnsembleState, Sampling, SpinEnsemble,
};
use chirpmem::protocol::{build_ab_echo, default_excitation, default_tau, EventKind, ModeRegistry};
use chirpmem::sim::{simulate_from, SimConfig};
use chirpmem::waveforms::{GaussianParams, WurstParams};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::oracle::{self, OracleConfig, OracleSummary};
use super::{peak_near, step_for, SUMMARY_SCHEMA};
use crate::bundle::Bundle;
use crate::error::{CliError, Result};
use crate::quantity::{hz, hz_per_s, rad, seconds};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Fig4Config {
    pub n_spins: usize,
    #[serde(with = "seconds")]
    pub duration: f64,
    /// Reference pulse amplitude A_ref.
    #[serde(with = "hz")]
    pub amplitude: f64,
    /// B amplitudes as multiples of A_ref.
    pub amplitude_factors: Vec<f64>,
    /// Reference chirp rates |R_ref|.
    #[serde(with = "hz_per_s::list")]
    pub references: Vec<f64>,
    /// |R_B| / |R_ref| swept over [span_lo, span_hi].
    pub span_lo: f64,
    pub span_hi: f64,
    /// Coarse profile points; the refined grid has 2n − 1.
    pub points: usize,
    /// Usable |R| range being partitioned.
    #[serde(with = "hz_per_s")]
    pub r_min: f64,
    #[serde(with = "hz_per_s")]
    pub r_max: f64,
    pub coupling_min: f64,
    #[serde(with = "hz")]
    pub linewidth_max: f64,
    /// Probe spins within this fraction of the narrowest half band.
    pub band_fraction: f64,
    #[serde(with = "rad")]
    pub tip_angle: f64,
    #[serde(with = "seconds")]
    pub search_half_width: f64,
    pub oracle: OracleConfig,
}

impl Default for Fig4Config {
    fn default() -> Self {
        let (t, kappa) = (200e-6, 400e3);
        Self {
            n_spins: 200,
            duration: t,
            amplitude: 300e3,
            amplitude_factors: vec![1.0, 1.05],
            references: vec![2.5e9, 6e9, 1.3e10],
            span_lo: 0.6,
            span_hi: 1.4,
            points: 17,
            r_min: kappa / t,
            r_max: kappa * kappa * t / 10.0 / t,
            coupling_min: 0.5,
            linewidth_max: 300e3,
            band_fraction: 0.4,
            tip_angle: 0.05,
            search_half_width: 4e-6,
            oracle: OracleConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquivalenceCheck {
    pub r_ref: f64,
    pub a_b: f64,
    /// R on the fitted ridge at amplitude a_b.
    pub r_on: f64,
    /// One cell step away from the ridge.
    pub r_off: f64,
    /// Echo over the identical-pair echo.
    pub on_ratio: f64,
    pub off_ratio: f64,
    pub classified_on: bool,
    pub classified_off: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fig4Summary {
    pub schema: u32,
    pub n_spins: usize,
    pub coarse: ModeMap,
    pub refined: ModeMap,
    pub count: usize,
    pub refined_count: usize,
    pub stable: bool,
    pub equivalence: EquivalenceCheck,
    pub oracle: OracleSummary,
}

pub struct Fig4Run {
    pub summary: Fig4Summary,
    /// Refined profiles, echo normalized by the prepared coherence.
    pub profiles: Vec<RidgeProfile>,
}

/// Spins and prepared coherence for one reference pulse.
struct Probe {
    ens: SpinEnsemble,
    init: EnsembleState,
    p0: f64,
    detuning_max: f64,
}

fn probe(cfg: &Fig4Config, r_ref: f64, seed: u64) -> Result<Probe> {
    let dmax = cfg.band_fraction * cfg.span_lo * r_ref * cfg.duration / 2.0;
    let spec = EnsembleSpec {
        n_spins: cfg.n_spins,
        detuning: DetuningDist::Lorentzian { fwhm: dmax.min(cfg.linewidth_max), max: dmax },
        coupling: CouplingDist::LogUniform { min: cfg.coupling_min, max: 1.0 },
        g_ref: None,
        sampling: Sampling::Stratified,
        seed,
    };
    let ens = sample_ensemble(&spec)?;
    let mut init = EnsembleState::ground(ens.len());
    hard_pulse(&mut init, &ens, cfg.tip_angle, 0.0, true);
    let p0 = init.polarization(&ens).norm();
    Ok(Probe { ens, init, p0, detuning_max: dmax })
}

/// AB-echo peak at 4τ over the prepared coherence.
fn ab_echo(cfg: &Fig4Config, pr: &Probe, a: &WurstParams, b: &WurstParams) -> Result<f64> {
    let reg = ModeRegistry::new().with("A", *a).with("B", *b);
    let ex = GaussianParams { center: 0.0, ..default_excitation(0.0) };
    let tau = default_tau(cfg.duration, ex.duration);
    let mut s = build_ab_echo("A", "B", tau, &reg, &ex)?;
    s.events.retain(|e| !matches!(e.kind, EventKind::Excitation { .. }));
    let dt = step_for(a.bandwidth.max(b.bandwidth), 2.0 * pr.detuning_max);
    let sc = SimConfig { t_start: Some(0.0), t_end: Some(4.0 * tau + 20e-6), ..SimConfig::new(dt) };
    let r = simulate_from(&s, &pr.ens, &pr.init, &sc)?;
    Ok(peak_near(&r.polarization, 4.0 * tau, cfg.search_half_width).1 / pr.p0)
}

fn coarse(p: &RidgeProfile) -> RidgeProfile {
    let pick = |v: &[f64]| v.iter().step_by(2).copied().collect();
    RidgeProfile { r_b: pick(&p.r_b), echo: pick(&p.echo), ..p.clone() }
}

pub fn run(cfg: &Fig4Config, seed: u64) -> Result<Fig4Run> {
    if cfg.points < 5 || cfg.references.is_empty() || cfg.amplitude_factors.is_empty() {
        return Err(CliError::config("fig4", "points/references", "need at least 5 points and one reference"));
    }
    let fine = 2 * cfg.points - 1;
    let mut profiles = Vec::new();
    let mut probes = Vec::new();
    for &r_ref in &cfg.references {
        let pr = probe(cfg, r_ref, seed)?;
        let a = WurstParams::from_rate(r_ref, cfg.duration, cfg.amplitude)?;
        for &f in &cfg.amplitude_factors {
            let a_b = f * cfg.amplitude;
            let r_b: Vec<f64> = (0..fine)
                .map(|k| r_ref * (cfg.span_lo + (cfg.span_hi - cfg.span_lo) * k as f64 / (fine - 1) as f64))
                .collect();
            let echo = r_b
                .par_iter()
                .map(|&r| ab_echo(cfg, &pr, &a, &WurstParams::from_rate(r, cfg.duration, a_b)?))
                .collect::<Result<Vec<f64>>>()?;
            profiles.push(RidgeProfile { r_ref, a_ref: cfg.amplitude, a_b, r_b, echo });
        }
        probes.push(pr);
    }
    let params = ModeMapParams { amplitude: cfg.amplitude, r_min: cfg.r_min, r_max: cfg.r_max };
    let coarse_map = mode_map(&profiles.iter().map(coarse).collect::<Vec<_>>(), params)?;
    let refined = mode_map(&profiles, params)?;

    // On and off the fitted ridge through the middle reference.
    let k = cfg.references.len() / 2;
    let (r_ref, pr) = (cfg.references[k], &probes[k]);
    let a = WurstParams::from_rate(r_ref, cfg.duration, cfg.amplitude)?;
    let a_b = cfg.amplitude_factors.last().copied().unwrap_or(1.0) * cfg.amplitude;
    let model = refined.model;
    let r_on = model.ridge_rate(&a, a_b);
    let r_off = r_on + model.width.at(r_on, a_b) * chirpmem::analysis::hundredth_max_factor();
    let (b_on, b_off) = (WurstParams::from_rate(r_on, cfg.duration, a_b)?, WurstParams::from_rate(r_off, cfg.duration, a_b)?);
    let same = ab_echo(cfg, pr, &a, &a)?;
    let equivalence = EquivalenceCheck {
        r_ref,
        a_b,
        r_on,
        r_off,
        on_ratio: ab_echo(cfg, pr, &a, &b_on)? / same,
        off_ratio: ab_echo(cfg, pr, &a, &b_off)? / same,
        classified_on: model.equivalent(&a, &b_on),
        classified_off: model.equivalent(&a, &b_off),
    };

    let oracle = oracle::run(&cfg.oracle)?;
    let summary = Fig4Summary {
        schema: SUMMARY_SCHEMA,
        n_spins: cfg.n_spins,
        count: coarse_map.count,
        refined_count: refined.count,
        stable: coarse_map.count.abs_diff(refined.count) <= 1,
        coarse: coarse_map,
        refined,
        equivalence,
        oracle,
    };
    Ok(Fig4Run { summary, profiles })
}

impl Fig4Run {
    pub fn write(&self, b: &mut Bundle) -> Result<()> {
        let s = &self.summary;
        let mut rows = Vec::new();
        for p in &self.profiles {
            for (&r, &e) in p.r_b.iter().zip(&p.echo) {
                rows.push(vec![p.r_ref, p.a_ref, p.a_b, r, e]);
            }
        }
        b.table("profiles.csv", &["r_ref", "a_ref", "a_b", "r_b", "echo"], &rows)?;
        let rows: Vec<Vec<f64>> = s
            .refined
            .ridges
            .iter()
            .map(|f| vec![f.r_ref, f.a_ref, f.a_b, f.center, f.sigma, f.peak, f.baseline])
            .collect();
        b.table("ridges.csv", &["r_ref", "a_ref", "a_b", "center", "sigma", "peak", "baseline"], &rows)?;
        let rows: Vec<Vec<f64>> = s.refined.edges.iter().enumerate().map(|(k, &r)| vec![k as f64, r]).collect();
        b.table("cells.csv", &["edge", "r"], &rows)?;
        let n = 64;
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|k| {
                let r = s.refined.params.r_min * (s.refined.params.r_max / s.refined.params.r_min).powf(k as f64 / (n - 1) as f64);
                vec![r, adiabatic_amplitude_bound(r)]
            })
            .collect();
        b.table("bounds.csv", &["r", "amplitude_q1"], &rows)?;
        let rows: Vec<Vec<f64>> =
            s.oracle.spins.iter().map(|p| vec![p.delta, p.coupling, p.q_min, p.phase_error]).collect();
        b.table("oracle.csv", &["delta", "coupling", "q_min", "phase_error"], &rows)?;
        b.json("summary.json", s)
    }
}
