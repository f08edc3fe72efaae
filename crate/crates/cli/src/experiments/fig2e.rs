// Copyright 2026 The chirpmem Authors
// SPDX-License-Identifier: Apache-2.0

//! Decoupled storage: A[BB]ₙA (one echo, silenced decay) against A[AA]ₙA
//! (an echo after every pair, each emission removing η_em).
//!
//! The simulator has no loss channel, so the decay trains are generated from
//! the decay models at the compiled storage times with seeded noise, then
//! fitted. The DD schedules themselves are simulated to confirm which pulses
//! emit.

use chirpmem::analysis::{fit_emission_decay, fit_silenced_decay, DecayFit, DecayModel};
use chirpmem::ensemble::{sample_ensemble, CouplingDist, DetuningDist, EnsembleSpec, Sampling};
use chirpmem::protocol::{build_dd_sequence, default_excitation, default_tau, DdKind, ModeRegistry, PulseSchedule};
use chirpmem::sim::{simulate, SimConfig};
use chirpmem::waveforms::WurstParams;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{step_for, SUMMARY_SCHEMA};
use crate::bundle::Bundle;
use crate::error::Result;
use crate::quantity::{hz, hz_per_s, seconds};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Fig2eConfig {
    #[serde(with = "seconds")]
    pub t_m: f64,
    pub eta_em: f64,
    pub a0: f64,
    /// Noise floor K of the decay models.
    pub floor: f64,
    /// Gaussian noise, relative to A₀.
    pub noise: f64,
    /// Largest number of decoupling pairs.
    pub max_pairs: usize,
    #[serde(with = "hz_per_s")]
    pub rate_a: f64,
    #[serde(with = "hz_per_s")]
    pub rate_b: f64,
    #[serde(with = "seconds")]
    pub duration: f64,
    #[serde(with = "hz")]
    pub amplitude: f64,
    /// Spins for the structure runs.
    pub n_spins: usize,
    /// Pairs in the structure runs.
    pub structure_pairs: usize,
}

impl Default for Fig2eConfig {
    fn default() -> Self {
        Self {
            t_m: 2.0e-3,
            eta_em: 0.17,
            a0: 1.0,
            floor: 0.01,
            noise: 0.005,
            max_pairs: 10,
            rate_a: -11.25e9,
            rate_b: 7.5e9,
            duration: 100e-6,
            amplitude: 200e3,
            n_spins: 400,
            structure_pairs: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainPoint {
    pub pairs: usize,
    pub storage_time: f64,
    /// Echoes emitted before this one.
    pub prior_echoes: usize,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StructureRow {
    pub kind: DdKind,
    pub pairs: usize,
    pub predicted: usize,
    pub found: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fig2eSummary {
    pub schema: u32,
    pub truth_t_m: f64,
    pub truth_eta_em: f64,
    pub silenced_fit: DecayFit,
    pub emission_fit: DecayFit,
    pub abba_train: Vec<TrainPoint>,
    pub aaaa_train: Vec<TrainPoint>,
    pub structure: Vec<StructureRow>,
}

pub struct Fig2eRun {
    pub summary: Fig2eSummary,
}

/// Storage time of the final echo of a DD schedule.
fn storage_time(s: &PulseSchedule) -> f64 {
    let t_ex = s.excitations().map(|(_, p)| p.center).next().unwrap_or(0.0);
    s.predicted_echoes.iter().map(|e| e.time).fold(f64::NEG_INFINITY, f64::max) - t_ex
}

pub fn run(cfg: &Fig2eConfig, seed: u64) -> Result<Fig2eRun> {
    let a = WurstParams::from_rate(cfg.rate_a, cfg.duration, cfg.amplitude)?;
    let b = WurstParams::from_rate(cfg.rate_b, cfg.duration, cfg.amplitude)?;
    let reg = ModeRegistry::new().with("A", a).with("B", b);
    let ex = default_excitation(2e3);
    let tau = default_tau(cfg.duration, ex.duration);

    let truth = DecayFit {
        model: DecayModel::RepeatedEmission,
        time_constant: cfg.t_m,
        a0: cfg.a0,
        k: cfg.floor,
        eta_em: Some(cfg.eta_em),
        stretch: None,
        residual_norm: 0.0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, cfg.noise * cfg.a0).expect("finite noise");
    let mut abba_train = Vec::new();
    let mut aaaa_train = Vec::new();
    for n in 0..=cfg.max_pairs {
        let sb = build_dd_sequence(DdKind::Abba, n as i64, tau, &reg, "A", "B", &ex)?;
        let sa = build_dd_sequence(DdKind::Aaaa, n as i64, tau, &reg, "A", "A", &ex)?;
        let (tb, ta) = (storage_time(&sb), storage_time(&sa));
        abba_train.push(TrainPoint { pairs: n, storage_time: tb, prior_echoes: 0, amplitude: truth.eval(tb, 0) + noise.sample(&mut rng) });
        let prior = sa.predicted_echoes.len() - 1;
        aaaa_train.push(TrainPoint { pairs: n, storage_time: ta, prior_echoes: prior, amplitude: truth.eval(ta, prior) + noise.sample(&mut rng) });
    }
    let (t, y): (Vec<f64>, Vec<f64>) = abba_train.iter().map(|p| (p.storage_time, p.amplitude)).unzip();
    let silenced_fit = fit_silenced_decay(&t, &y)?;
    let (t, y): (Vec<f64>, Vec<f64>) = aaaa_train.iter().map(|p| (p.storage_time, p.amplitude)).unzip();
    let idx: Vec<usize> = aaaa_train.iter().map(|p| p.prior_echoes).collect();
    let emission_fit = fit_emission_decay(&t, &y, &idx, &silenced_fit)?;

    let spec = EnsembleSpec {
        n_spins: cfg.n_spins,
        detuning: DetuningDist::Lorentzian { fwhm: 100e3, max: 200e3 },
        coupling: CouplingDist::LogUniform { min: 0.7, max: 1.0 },
        g_ref: None,
        sampling: Sampling::Stratified,
        seed,
    };
    let ens = sample_ensemble(&spec)?;
    let dt = step_for(a.bandwidth.max(b.bandwidth), 200e3);
    let mut structure = Vec::new();
    for kind in [DdKind::Abba, DdKind::Aaaa] {
        let inner = if kind == DdKind::Abba { "B" } else { "A" };
        let s = build_dd_sequence(kind, cfg.structure_pairs as i64, tau, &reg, "A", inner, &ex)?;
        let r = simulate(&s, &ens, &SimConfig::new(dt).with_decimation(8))?;
        let found = r.echoes.iter().filter(|e| e.record.found()).count();
        structure.push(StructureRow { kind, pairs: cfg.structure_pairs, predicted: s.predicted_echoes.len(), found });
    }

    Ok(Fig2eRun {
        summary: Fig2eSummary {
            schema: SUMMARY_SCHEMA,
            truth_t_m: cfg.t_m,
            truth_eta_em: cfg.eta_em,
            silenced_fit,
            emission_fit,
            abba_train,
            aaaa_train,
            structure,
        },
    })
}

impl Fig2eRun {
    pub fn write(&self, b: &mut Bundle) -> Result<()> {
        let s = &self.summary;
        let mut rows = Vec::new();
        for (k, train, fit) in [(0.0, &s.abba_train, &s.silenced_fit), (1.0, &s.aaaa_train, &s.emission_fit)] {
            for p in train {
                rows.push(vec![k, p.pairs as f64, p.storage_time, p.prior_echoes as f64, p.amplitude, fit.eval(p.storage_time, p.prior_echoes)]);
            }
        }
        b.table("decay.csv", &["sequence", "pairs", "t_storage", "prior_echoes", "amplitude", "fit"], &rows)?;
        b.json("summary.json", s)
    }
}
