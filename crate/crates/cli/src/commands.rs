// Copyright 2026 The chirpmem Authors
// SPDX-License-Identifier: Apache-2.0

//! Argument parsing and subcommand dispatch.

use std::path::{Path, PathBuf};

use chirpmem::analysis::{fit_emission_decay, fit_ridge, fit_silenced_decay, mode_map, ModeMapParams, RidgeProfile};
use chirpmem::cavity::{fit_fano, intracavity_drive};
use chirpmem::ensemble::sample_ensemble;
use chirpmem::io::{read_lineshape_csv, read_table_csv, SeriesKind};
use chirpmem::protocol::{build_ab_echo, compile_program, default_excitation, default_tau, ModeRegistry};
use chirpmem::sim::{render_schedule, schedule_grid, simulate, SimConfig};
use chirpmem::units::{parse_quantity, Dimension};
use chirpmem::waveforms::{gaussian_pulse, wurst_pulse, WurstParams};
use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use crate::bundle::{Bundle, Manifest};
use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::experiments::{fifo, fig1, fig2, fig2e, fig3, fig4, peak_near, step_for, write_run, SUMMARY_SCHEMA};

#[derive(Debug, Parser)]
#[command(name = "chirpmem", version, about = "Chirped-pulse random-access spin-ensemble memory simulator")]
pub struct Cli {
    /// TOML experiment configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; files already present are never overwritten.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for the ensemble propagation.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Keep every N-th sample of exported traces.
    #[arg(long, global = true)]
    pub decimation: Option<usize>,
    /// Override the number of spins.
    #[arg(long, global = true)]
    pub spins: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render the configured modes, excitation and program drive to CSV.
    Synth,
    /// Run the configured program through the ensemble.
    Simulate,
    /// AB-echo amplitude against the rate and amplitude of pulse B.
    Sweep,
    /// Fit a model to CSV data.
    Fit {
        #[arg(value_enum)]
        kind: FitKind,
        /// Input CSV.
        input: PathBuf,
        /// Cut amplitude for the mode-map partition.
        #[arg(long)]
        amplitude: Option<String>,
        /// Lower end of the usable chirp-rate range.
        #[arg(long)]
        r_min: Option<String>,
        /// Upper end of the usable chirp-rate range.
        #[arg(long)]
        r_max: Option<String>,
    },
    /// Run one of the canned figure experiments.
    Reproduce {
        #[arg(value_enum)]
        figure: Figure,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FitKind {
    /// Columns `t_storage,amplitude`, optionally `sequence,prior_echoes`.
    Decay,
    /// Columns `f,|S21|`.
    Fano,
    /// Columns `r_ref,a_ref,a_b,r_b,echo`.
    Modemap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Figure {
    Fig1,
    Fig2,
    Fig2e,
    Fig3,
    Fig4,
    Fifo,
}

impl Figure {
    pub fn name(self) -> &'static str {
        match self {
            Figure::Fig1 => "fig1",
            Figure::Fig2 => "fig2",
            Figure::Fig2e => "fig2e",
            Figure::Fig3 => "fig3",
            Figure::Fig4 => "fig4",
            Figure::Fifo => "fifo",
        }
    }
}

pub struct Outcome {
    pub dir: PathBuf,
    pub manifest: Manifest,
}

/// Parses `args` (program name first) and runs the command.
pub fn run_args<I, T>(args: I) -> Result<Outcome>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| CliError::Usage(e.to_string()))?;
    run(&cli)
}

pub fn run(cli: &Cli) -> Result<Outcome> {
    match cli.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Usage(format!("--threads: {e}")))?;
            pool.install(|| dispatch(cli))
        }
        None => dispatch(cli),
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(d) = cli.decimation {
        cfg.grid.decimation = d;
    }
    if let (Some(n), Some(e)) = (cli.spins, cfg.ensemble.as_mut()) {
        e.n_spins = n;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn dispatch(cli: &Cli) -> Result<Outcome> {
    let mut cfg = load_config(cli)?;
    let out = cli.out.clone().or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("chirpmem-out"));
    let mut b = Bundle::create(&out)?;
    let command = match &cli.command {
        Command::Synth => {
            synth(&cfg, &mut b)?;
            "synth".to_string()
        }
        Command::Simulate => {
            simulate_program(&cfg, &mut b)?;
            "simulate".to_string()
        }
        Command::Sweep => {
            sweep(&cfg, &mut b)?;
            "sweep".to_string()
        }
        Command::Fit { kind, input, amplitude, r_min, r_max } => {
            fit(*kind, input, [amplitude, r_min, r_max], &mut b)?;
            format!("fit {}", kind.to_possible_value().expect("named").get_name())
        }
        Command::Reproduce { figure } => {
            reproduce(*figure, cli, &mut cfg, &mut b)?;
            format!("reproduce {}", figure.name())
        }
    };
    let text = toml::to_string(&cfg).map_err(|e| CliError::Usage(format!("cannot serialize configuration: {e}")))?;
    b.write_bytes("config.toml", text.as_bytes())?;
    let manifest = b.finish(&command, cfg.seed, &text)?;
    Ok(Outcome { dir: out, manifest })
}

/// Step from `grid.dt`, else from the widest mode and the detuning cutoff.
fn sim_step(cfg: &ExperimentConfig, reg: &ModeRegistry) -> Result<f64> {
    if let Some(dt) = cfg.grid.dt {
        return Ok(dt);
    }
    let bw = reg.modes.values().map(|p| p.bandwidth).fold(0.0, f64::max);
    let dmax = cfg.ensemble.as_ref().map_or(0.0, |e| e.detuning.dist().max());
    let ex = cfg.excitation.as_ref().map_or(default_excitation(0.0).fwhm, |e| e.fwhm);
    Ok(step_for(bw.max(1.0 / ex), dmax))
}

fn synth(cfg: &ExperimentConfig, b: &mut Bundle) -> Result<()> {
    let (prog, reg) = cfg.memory_program()?;
    let dt = sim_step(cfg, &reg)?;
    for (name, p) in &reg.modes {
        b.series(&format!("mode_{name}.csv"), &wurst_pulse(&p.at(0.0), 0.0, dt)?, SeriesKind::Waveform)?;
    }
    b.series("excitation.csv", &gaussian_pulse(&prog.excitation, 0.0, dt)?, SeriesKind::Waveform)?;
    if !prog.blocks.is_empty() {
        let sched = compile_program(&prog, &reg)?;
        let sc = cfg.grid.sim_config(dt, None);
        let drive = render_schedule(&sched, &schedule_grid(&sched, &sc)?)?;
        b.series("drive.csv", &drive, SeriesKind::Waveform)?;
        if let Some(r) = cfg.resonator_params()? {
            b.series("intracavity.csv", &intracavity_drive(&drive, &r)?, SeriesKind::Waveform)?;
        }
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct SimulateSummary {
    schema: u32,
    n_spins: usize,
    dt: f64,
    tau: f64,
    predicted_echoes: usize,
    found_echoes: usize,
    max_norm_drift: f64,
}

fn simulate_program(cfg: &ExperimentConfig, b: &mut Bundle) -> Result<()> {
    let (prog, reg) = cfg.memory_program()?;
    let sched = compile_program(&prog, &reg)?;
    let ens = sample_ensemble(&cfg.ensemble_spec()?)?;
    let dt = sim_step(cfg, &reg)?;
    let r = simulate(&sched, &ens, &cfg.grid.sim_config(dt, cfg.resonator_params()?))?;
    write_run(b, "", &r, 1)?;
    b.json(
        "summary.json",
        &SimulateSummary {
            schema: SUMMARY_SCHEMA,
            n_spins: ens.len(),
            dt,
            tau: sched.tau,
            predicted_echoes: sched.predicted_echoes.len(),
            found_echoes: r.echoes.iter().filter(|e| e.record.found()).count(),
            max_norm_drift: r.max_norm_drift,
        },
    )
}

#[derive(Debug, Serialize)]
struct SweepSummary {
    schema: u32,
    reference: String,
    reference_rate: f64,
    reference_amplitude: f64,
    /// Ridge fit per B amplitude, absent where the profile is too sparse.
    ridges: Vec<Option<chirpmem::analysis::RidgeFit>>,
}

fn sweep(cfg: &ExperimentConfig, b: &mut Bundle) -> Result<()> {
    let s = cfg.sweep.as_ref().ok_or_else(|| CliError::config(&cfg.source_name, "sweep", "section is required"))?;
    let reg = cfg.registry()?;
    let a = *reg.get(&s.reference)?;
    let ens = sample_ensemble(&cfg.ensemble_spec()?)?;
    let ex = cfg.excitation.as_ref().map_or(default_excitation(2e3), |e| e.params());
    let tau = default_tau(a.duration, ex.duration);
    let dmax = cfg.ensemble.as_ref().map_or(0.0, |e| e.detuning.dist().max());
    let points: Vec<(f64, f64)> =
        s.amplitudes.iter().flat_map(|&amp| s.rates.iter().map(move |&r| (amp, r))).collect();
    let echo = points
        .par_iter()
        .map(|&(amp, r)| -> Result<f64> {
            let bp = WurstParams::from_rate(r, a.duration, amp)?.with_order(a.order);
            let reg = ModeRegistry::new().with("A", a).with("B", bp);
            let sched = build_ab_echo("A", "B", tau, &reg, &ex)?;
            let dt = cfg.grid.dt.unwrap_or_else(|| step_for(a.bandwidth.max(bp.bandwidth), dmax));
            let sc = SimConfig { t_end: Some(4.0 * tau + cfg.grid.padding), ..cfg.grid.sim_config(dt, None) };
            let res = simulate(&sched, &ens, &sc)?;
            Ok(peak_near(&res.polarization, 4.0 * tau, cfg.grid.echo_half_window).1)
        })
        .collect::<Result<Vec<f64>>>()?;
    let rows: Vec<Vec<f64>> = points.iter().zip(&echo).map(|(&(amp, r), &e)| vec![amp, r, e]).collect();
    b.table("sweep.csv", &["a_b", "r_b", "echo"], &rows)?;
    let n = s.rates.len();
    let ridges = s
        .amplitudes
        .iter()
        .enumerate()
        .map(|(k, &amp)| {
            let p = RidgeProfile {
                r_ref: a.chirp_rate().abs(),
                a_ref: a.amplitude,
                a_b: amp,
                r_b: s.rates.iter().map(|r| r.abs()).collect(),
                echo: echo[k * n..(k + 1) * n].to_vec(),
            };
            fit_ridge(&p).ok()
        })
        .collect();
    b.json(
        "summary.json",
        &SweepSummary {
            schema: SUMMARY_SCHEMA,
            reference: s.reference.clone(),
            reference_rate: a.chirp_rate(),
            reference_amplitude: a.amplitude,
            ridges,
        },
    )
}

fn column(headers: &[String], name: &str, file: &Path) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| CliError::Parse { file: file.display().to_string(), reason: format!("missing column `{name}`") })
}

fn fit(kind: FitKind, input: &Path, opts: [&Option<String>; 3], b: &mut Bundle) -> Result<()> {
    match kind {
        FitKind::Decay => {
            let (h, rows) = read_table_csv(input)?;
            let (ti, ai) = (column(&h, "t_storage", input)?, column(&h, "amplitude", input)?);
            let seq = column(&h, "sequence", input).ok();
            let prior = column(&h, "prior_echoes", input).ok();
            let pick = |s: f64| -> Vec<&Vec<f64>> { rows.iter().filter(|r| seq.map_or(s == 0.0, |k| r[k] == s)).collect() };
            let silenced = pick(0.0);
            let t: Vec<f64> = silenced.iter().map(|r| r[ti]).collect();
            let a: Vec<f64> = silenced.iter().map(|r| r[ai]).collect();
            let base = fit_silenced_decay(&t, &a)?;
            let emitting = pick(1.0);
            let emission = match (prior, emitting.is_empty()) {
                (Some(pi), false) => {
                    let t: Vec<f64> = emitting.iter().map(|r| r[ti]).collect();
                    let a: Vec<f64> = emitting.iter().map(|r| r[ai]).collect();
                    let n: Vec<usize> = emitting.iter().map(|r| r[pi] as usize).collect();
                    Some(fit_emission_decay(&t, &a, &n, &base)?)
                }
                _ => None,
            };
            #[derive(Serialize)]
            struct DecaySummary {
                schema: u32,
                silenced: chirpmem::analysis::DecayFit,
                emission: Option<chirpmem::analysis::DecayFit>,
            }
            b.json("fit.json", &DecaySummary { schema: SUMMARY_SCHEMA, silenced: base, emission })
        }
        FitKind::Fano => {
            let (f, m) = read_lineshape_csv(input)?;
            b.json("fit.json", &fit_fano(&f, &m)?)
        }
        FitKind::Modemap => {
            let [amp, lo, hi] = opts;
            let need = |v: &Option<String>, flag: &str, dim: Dimension| -> Result<f64> {
                let text = v.as_ref().ok_or_else(|| CliError::Usage(format!("fit modemap needs --{flag}")))?;
                parse_quantity(text, dim).map_err(|e| CliError::Usage(format!("--{flag}: {e}")))
            };
            let params = ModeMapParams {
                amplitude: need(amp, "amplitude", Dimension::Frequency)?,
                r_min: need(lo, "r-min", Dimension::ChirpRate)?,
                r_max: need(hi, "r-max", Dimension::ChirpRate)?,
            };
            let (h, rows) = read_table_csv(input)?;
            let idx = ["r_ref", "a_ref", "a_b", "r_b", "echo"]
                .iter()
                .map(|c| column(&h, c, input))
                .collect::<Result<Vec<_>>>()?;
            let mut profiles: Vec<RidgeProfile> = Vec::new();
            for r in &rows {
                let (rr, ar, ab) = (r[idx[0]], r[idx[1]], r[idx[2]]);
                match profiles.last_mut() {
                    Some(p) if p.r_ref == rr && p.a_ref == ar && p.a_b == ab => {
                        p.r_b.push(r[idx[3]]);
                        p.echo.push(r[idx[4]]);
                    }
                    _ => profiles.push(RidgeProfile { r_ref: rr, a_ref: ar, a_b: ab, r_b: vec![r[idx[3]]], echo: vec![r[idx[4]]] }),
                }
            }
            b.json("fit.json", &mode_map(&profiles, params)?)
        }
    }
}

fn reproduce(fig: Figure, cli: &Cli, cfg: &mut ExperimentConfig, b: &mut Bundle) -> Result<()> {
    let seed = cfg.seed;
    let (spins, dec) = (cli.spins, cli.decimation);
    match fig {
        Figure::Fig1 => {
            let mut c = cfg.fig1.clone().unwrap_or_default();
            if let Some(n) = spins {
                c.n_spins = n;
            }
            if let Some(d) = dec {
                c.decimation = d;
            }
            fig1::run(&c, seed)?.write(b)?;
            cfg.fig1 = Some(c);
        }
        Figure::Fig2 => {
            let mut c = cfg.fig2.clone().unwrap_or_default();
            if let Some(n) = spins {
                c.n_spins = n;
                c.abba.n_spins = n;
            }
            if let Some(d) = dec {
                c.decimation = d;
                c.abba.decimation = d;
            }
            fig2::run(&c, seed)?.write(b)?;
            cfg.fig2 = Some(c);
        }
        Figure::Fig2e => {
            let mut c = cfg.fig2e.clone().unwrap_or_default();
            if let Some(n) = spins {
                c.n_spins = n;
            }
            fig2e::run(&c, seed)?.write(b)?;
            cfg.fig2e = Some(c);
        }
        Figure::Fig3 => {
            let mut c = cfg.fig3.clone().unwrap_or_default();
            if let Some(n) = spins {
                c.n_spins = n;
            }
            if let Some(d) = dec {
                c.decimation = d;
            }
            fig3::run(&c, seed)?.write(b)?;
            cfg.fig3 = Some(c);
        }
        Figure::Fig4 => {
            let mut c = cfg.fig4.clone().unwrap_or_default();
            if let Some(n) = spins {
                c.n_spins = n;
            }
            fig4::run(&c, seed)?.write(b)?;
            cfg.fig4 = Some(c);
        }
        Figure::Fifo => {
            let mut c = cfg.fifo.clone().unwrap_or_default();
            if let Some(n) = spins {
                c.n_spins = n;
            }
            if let Some(d) = dec {
                c.decimation = d;
            }
            fifo::run(&c, seed)?.write(b)?;
            cfg.fifo = Some(c);
        }
    }
    Ok(())
}
