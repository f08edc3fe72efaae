// Copyright 2026 The chirpmem Authors
// SPDX-License-Identifier: Apache-2.0

//! TOML experiment configuration. Every physical value is a string with an
//! explicit unit suffix; see [`crate::quantity`].

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chirpmem::cavity::ResonatorParams;
use chirpmem::ensemble::{CouplingDist, DetuningDist, EnsembleSpec, Sampling};
use chirpmem::protocol::{parse_program, MemoryProgram, ModeRegistry};
use chirpmem::sim::SimConfig;
use chirpmem::waveforms::{ChirpSign, GaussianParams, WurstParams, DEFAULT_WURST_ORDER};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::experiments::{fifo, fig1, fig2, fig2e, fig3, fig4};
use crate::quantity::{hz, hz_per_s, rad, seconds};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DetuningConfig {
    Lorentzian {
        #[serde(with = "hz")]
        fwhm: f64,
        #[serde(with = "hz")]
        max: f64,
    },
    Gaussian {
        #[serde(with = "hz")]
        fwhm: f64,
        #[serde(with = "hz")]
        max: f64,
    },
}

impl DetuningConfig {
    pub fn dist(&self) -> DetuningDist {
        match *self {
            DetuningConfig::Lorentzian { fwhm, max } => DetuningDist::Lorentzian { fwhm, max },
            DetuningConfig::Gaussian { fwhm, max } => DetuningDist::Gaussian { fwhm, max },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    pub n_spins: usize,
    pub detuning: DetuningConfig,
    /// Relative couplings (dimensionless).
    pub coupling: CouplingDist,
    #[serde(default)]
    pub g_ref: Option<f64>,
    #[serde(default)]
    pub sampling: Sampling,
}

impl EnsembleConfig {
    pub fn spec(&self, seed: u64) -> EnsembleSpec {
        EnsembleSpec {
            n_spins: self.n_spins,
            detuning: self.detuning.dist(),
            coupling: self.coupling,
            g_ref: self.g_ref,
            sampling: self.sampling,
            seed,
        }
    }
}

/// One WURST mode: give either `bandwidth` with `chirp`, or a signed `rate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeConfig {
    #[serde(default, with = "hz::option", skip_serializing_if = "Option::is_none")]
    pub bandwidth: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chirp: Option<ChirpSign>,
    #[serde(default, with = "hz_per_s::option", skip_serializing_if = "Option::is_none")]
    pub rate: Option<f64>,
    #[serde(with = "seconds")]
    pub duration: f64,
    #[serde(with = "hz")]
    pub amplitude: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<u32>,
    #[serde(default, with = "rad")]
    pub phase: f64,
}

impl ModeConfig {
    pub fn from_params(p: &WurstParams) -> Self {
        Self {
            bandwidth: None,
            chirp: None,
            rate: Some(p.chirp_rate()),
            duration: p.duration,
            amplitude: p.amplitude,
            order: (p.order != DEFAULT_WURST_ORDER).then_some(p.order),
            phase: p.phase,
        }
    }

    pub fn params(&self) -> std::result::Result<WurstParams, String> {
        let p = match (self.bandwidth, self.chirp, self.rate) {
            (Some(bw), Some(c), None) => WurstParams::new(bw, self.duration, self.amplitude, c),
            (None, None, Some(r)) => WurstParams::from_rate(r, self.duration, self.amplitude),
            _ => return Err("give either `bandwidth` and `chirp`, or `rate`".into()),
        }
        .map_err(|e| e.to_string())?;
        let p = p.with_phase(self.phase).with_order(self.order.unwrap_or(DEFAULT_WURST_ORDER));
        p.validate().map_err(|e| e.to_string())?;
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExcitationConfig {
    #[serde(with = "hz")]
    pub amplitude: f64,
    #[serde(with = "seconds")]
    pub fwhm: f64,
    #[serde(with = "seconds")]
    pub duration: f64,
    #[serde(default, with = "rad")]
    pub phase: f64,
}

impl ExcitationConfig {
    pub fn from_params(p: &GaussianParams) -> Self {
        Self { amplitude: p.amplitude, fwhm: p.fwhm, duration: p.duration, phase: p.phase }
    }

    pub fn params(&self) -> GaussianParams {
        GaussianParams { amplitude: self.amplitude, fwhm: self.fwhm, duration: self.duration, phase: self.phase, center: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResonatorConfig {
    #[serde(with = "hz")]
    pub f0: f64,
    /// Loaded linewidth, FWHM.
    #[serde(with = "hz")]
    pub kappa: f64,
    #[serde(with = "hz")]
    pub kappa_c: f64,
}

impl ResonatorConfig {
    pub fn params(&self) -> chirpmem::Result<ResonatorParams> {
        ResonatorParams::new(self.f0, self.kappa, self.kappa_c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// Integration step; chosen from the bandwidths when absent.
    #[serde(default, with = "seconds::option", skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default = "one")]
    pub decimation: usize,
    #[serde(default = "padding", with = "seconds")]
    pub padding: f64,
    #[serde(default = "guard", with = "seconds")]
    pub guard: f64,
    #[serde(default = "half_window", with = "seconds")]
    pub echo_half_window: f64,
}

fn one() -> usize {
    1
}
fn padding() -> f64 {
    20e-6
}
fn guard() -> f64 {
    4e-6
}
fn half_window() -> f64 {
    8e-6
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { dt: None, decimation: 1, padding: padding(), guard: guard(), echo_half_window: half_window() }
    }
}

impl GridConfig {
    pub fn sim_config(&self, dt: f64, resonator: Option<ResonatorParams>) -> SimConfig {
        SimConfig {
            decimation: self.decimation,
            resonator,
            padding: self.padding,
            guard: self.guard,
            echo_half_window: self.echo_half_window,
            ..SimConfig::new(dt)
        }
    }
}

/// AB-echo sweep: pulse B scanned against reference A.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Name of the reference mode in `[modes]`.
    pub reference: String,
    #[serde(with = "hz_per_s::list")]
    pub rates: Vec<f64>,
    /// B amplitudes; a single entry gives a 1D profile.
    #[serde(with = "hz::list")]
    pub amplitudes: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Output directory, relative to the working directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ensemble: Option<EnsembleConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resonator: Option<ResonatorConfig>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub modes: BTreeMap<String, ModeConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub excitation: Option<ExcitationConfig>,
    /// Program file, relative to the configuration file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub program: Option<PathBuf>,
    /// Inline program text, used when `program` is absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub program_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fig1: Option<fig1::Fig1Config>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fig2: Option<fig2::Fig2Config>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fig2e: Option<fig2e::Fig2eConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fig3: Option<fig3::Fig3Config>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fig4: Option<fig4::Fig4Config>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fifo: Option<fifo::FifoConfig>,
    /// Directory of the file this was loaded from; resolves relative paths.
    #[serde(skip)]
    pub base_dir: PathBuf,
    #[serde(skip)]
    pub source_name: String,
}

fn default_seed() -> u64 {
    1
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        toml::from_str("").expect("empty configuration is valid")
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, name: &str) -> Result<Self> {
        let mut c: ExperimentConfig =
            toml::from_str(text).map_err(|e| CliError::Parse { file: name.to_string(), reason: e.to_string() })?;
        c.source_name = name.to_string();
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut c = Self::from_toml(&text, &path.display().to_string())?;
        c.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        c.validate()?;
        Ok(c)
    }

    fn err(&self, field: impl Into<String>, reason: impl Into<String>) -> CliError {
        let name = if self.source_name.is_empty() { "<config>" } else { &self.source_name };
        CliError::config(name, field, reason)
    }

    /// Semantic checks beyond parsing; errors name the offending field.
    pub fn validate(&self) -> Result<()> {
        if self.grid.decimation == 0 {
            return Err(self.err("grid.decimation", "must be at least 1"));
        }
        if let Some(dt) = self.grid.dt {
            if !(dt > 0.0) {
                return Err(self.err("grid.dt", "must be positive"));
            }
        }
        if let Some(e) = &self.ensemble {
            e.spec(self.seed).validate().map_err(|x| self.err("ensemble", x.to_string()))?;
        }
        if let Some(r) = &self.resonator {
            r.params().map_err(|x| self.err("resonator", x.to_string()))?;
        }
        self.registry()?;
        if let Some(e) = &self.excitation {
            e.params().validate().map_err(|x| self.err("excitation", x.to_string()))?;
        }
        if let Some(p) = &self.program {
            let path = self.base_dir.join(p);
            if !path.is_file() {
                return Err(self.err("program", format!("{} does not exist", path.display())));
            }
        }
        if let Some(s) = &self.sweep {
            if !self.modes.contains_key(&s.reference) {
                return Err(self.err("sweep.reference", format!("mode `{}` is not defined in [modes]", s.reference)));
            }
            if s.rates.is_empty() || s.amplitudes.is_empty() {
                return Err(self.err("sweep", "rates and amplitudes must be non-empty"));
            }
        }
        Ok(())
    }

    pub fn registry(&self) -> Result<ModeRegistry> {
        let mut reg = ModeRegistry::new();
        for (name, m) in &self.modes {
            let p = m.params().map_err(|r| self.err(format!("modes.{name}"), r))?;
            reg = reg.with(name, p);
        }
        Ok(reg)
    }

    pub fn resonator_params(&self) -> Result<Option<ResonatorParams>> {
        self.resonator.as_ref().map(|r| r.params().map_err(|x| self.err("resonator", x.to_string()))).transpose()
    }

    pub fn ensemble_spec(&self) -> Result<EnsembleSpec> {
        let e = self.ensemble.as_ref().ok_or_else(|| self.err("ensemble", "section is required"))?;
        Ok(e.spec(self.seed))
    }

    /// The memory program, from `program` or `program_text`. An absent
    /// program is empty. Modes from a `@registry` file are merged in.
    pub fn memory_program(&self) -> Result<(MemoryProgram, ModeRegistry)> {
        let mut reg = self.registry()?;
        let (text, name, dir) = match (&self.program, &self.program_text) {
            (Some(p), _) => {
                let path = self.base_dir.join(p);
                let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
                (text, path.display().to_string(), path.parent().map(Path::to_path_buf).unwrap_or_default())
            }
            (None, Some(t)) => (t.clone(), "program_text".to_string(), self.base_dir.clone()),
            (None, None) => (String::new(), "program_text".to_string(), self.base_dir.clone()),
        };
        // The config excitation stands in for a missing header.
        let text = match &self.excitation {
            Some(e) if !text.lines().any(|l| l.trim_start().starts_with("@excitation")) => format!(
                "@excitation amplitude={:e} Hz fwhm={:e} s duration={:e} s\n{text}",
                e.amplitude, e.fwhm, e.duration
            ),
            _ => text,
        };
        let mut prog = parse_program(&text).map_err(|e| CliError::Parse { file: name, reason: e.to_string() })?;
        if let Some(r) = &prog.registry {
            let path = dir.join(r);
            let extra = RegistryFile::load(&path)?;
            for (k, m) in extra.modes {
                if !reg.modes.contains_key(&k) {
                    let p = m.params().map_err(|x| CliError::config(&path.display().to_string(), format!("modes.{k}"), x))?;
                    reg = reg.with(&k, p);
                }
            }
        }
        if let Some(e) = &self.excitation {
            prog.excitation = e.params();
        }
        Ok((prog, reg))
    }
}

/// A stand-alone mode registry file: a `[modes]` table only.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegistryFile {
    #[serde(default)]
    pub modes: BTreeMap<String, ModeConfig>,
}

impl RegistryFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::Parse { file: path.display().to_string(), reason: e.to_string() })
    }
}
