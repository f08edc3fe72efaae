// Copyright 2026 The chirpmem Authors
// SPDX-License-Identifier: Apache-2.0

use std::path::Path;
use std::process::Command;

use chirpmem::analysis::{ModeMap, RidgeFit};
use chirpmem::cavity::{fano_transmission, FanoFit, ResonatorParams};
use chirpmem::io::{read_series_csv, read_table_csv, write_lineshape_csv, write_table_csv};
use chirpmem_cli::bundle::sha256_hex;
use chirpmem_cli::commands::run_args;
use chirpmem_cli::CliError;

const ENSEMBLE: &str = r#"
[ensemble]
n_spins = 60
detuning = { kind = "lorentzian", fwhm = "100 kHz", max = "200 kHz" }
coupling = { kind = "log_uniform", min = 0.7, max = 1.0 }
"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_chirpmem"))
}

fn run(dir: &Path, args: &[&str]) -> Result<chirpmem_cli::commands::Outcome, CliError> {
    let mut v = vec!["chirpmem".to_string()];
    v.extend(args.iter().map(|a| a.replace("{dir}", &dir.display().to_string())));
    run_args(v)
}

fn json<T: serde::de::DeserializeOwned>(p: &Path) -> T {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn empty_program_gives_zero_trace_and_exit_zero() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("c.toml"), ENSEMBLE).unwrap();
    let st = bin()
        .args(["--config", "c.toml", "--out", "o", "simulate"])
        .current_dir(d.path())
        .output()
        .unwrap();
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
    let trace = read_series_csv(&d.path().join("o/trace.csv")).unwrap();
    assert!(trace.samples.iter().all(|z| z.norm() == 0.0));
    let (_, echoes) = read_table_csv(&d.path().join("o/echoes.csv")).unwrap();
    assert!(echoes.is_empty());
}

#[test]
fn config_violation_names_file_and_field() {
    let d = tempfile::tempdir().unwrap();
    let text = format!("{ENSEMBLE}\n[grid]\ndecimation = 0\n");
    std::fs::write(d.path().join("bad.toml"), text).unwrap();
    let st = bin().args(["--config", "bad.toml", "--out", "o", "simulate"]).current_dir(d.path()).output().unwrap();
    assert_eq!(st.status.code(), Some(2));
    let err = String::from_utf8_lossy(&st.stderr);
    assert!(err.contains("bad.toml") && err.contains("grid.decimation"), "{err}");

    // Units are checked at the boundary.
    let text = ENSEMBLE.replace("100 kHz", "100 us");
    std::fs::write(d.path().join("unit.toml"), text).unwrap();
    let st = bin().args(["--config", "unit.toml", "--out", "o", "simulate"]).current_dir(d.path()).output().unwrap();
    assert_eq!(st.status.code(), Some(2));
}

#[test]
fn unknown_subcommand_and_missing_program_fail() {
    let st = bin().arg("frobnicate").output().unwrap();
    assert!(!st.status.success());
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("c.toml"), format!("program = \"missing.prog\"\n{ENSEMBLE}")).unwrap();
    let st = bin().args(["--config", "c.toml", "--out", "o", "simulate"]).current_dir(d.path()).output().unwrap();
    assert_eq!(st.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&st.stderr).contains("program"));
}

#[test]
fn outputs_are_append_only_and_manifest_hashes_match() {
    let d = tempfile::tempdir().unwrap();
    let o = run(d.path(), &["--out", "{dir}/o", "--spins", "40", "reproduce", "fig2e"]).unwrap();
    let m: serde_json::Value = json(&o.dir.join("manifest.json"));
    assert_eq!(m["command"], "reproduce fig2e");
    assert_eq!(m["schema"], "chirpmem.manifest/1");
    let files = m["files"].as_array().unwrap();
    assert!(files.iter().any(|f| f["path"] == "config.toml"));
    for f in files {
        let bytes = std::fs::read(o.dir.join(f["path"].as_str().unwrap())).unwrap();
        assert_eq!(sha256_hex(&bytes), f["sha256"].as_str().unwrap());
        assert_eq!(bytes.len() as u64, f["bytes"].as_u64().unwrap());
    }
    // The manifest's config hash covers the effective config file.
    let cfg = std::fs::read(o.dir.join("config.toml")).unwrap();
    assert_eq!(m["config_sha256"].as_str().unwrap(), sha256_hex(&cfg));
    let again = run(d.path(), &["--out", "{dir}/o", "reproduce", "fig2e"]);
    assert!(matches!(again, Err(CliError::Exists(_))));
}

#[test]
fn effective_config_reproduces_the_run() {
    let d = tempfile::tempdir().unwrap();
    run(d.path(), &["--out", "{dir}/a", "--seed", "9", "--spins", "40", "reproduce", "fig2e"]).unwrap();
    run(d.path(), &["--config", "{dir}/a/config.toml", "--out", "{dir}/b", "reproduce", "fig2e"]).unwrap();
    for f in ["decay.csv", "summary.json", "config.toml"] {
        assert_eq!(std::fs::read(d.path().join("a").join(f)).unwrap(), std::fs::read(d.path().join("b").join(f)).unwrap(), "{f}");
    }
}

#[test]
fn simulate_and_synth_run_a_program() {
    let d = tempfile::tempdir().unwrap();
    let text = format!(
        r#"
program_text = """
A WRITE amp=1 phase=0
B WRITE amp=1 phase=90 deg
B READ
A READ
"""
{ENSEMBLE}
[excitation]
amplitude = "2 kHz"
fwhm = "4 us"
duration = "8 us"

[modes.A]
rate = "-11.25 MHz/ms"
duration = "100 us"
amplitude = "200 kHz"

[modes.B]
bandwidth = "750 kHz"
chirp = "up"
duration = "100 us"
amplitude = "200 kHz"
"#
    );
    std::fs::write(d.path().join("c.toml"), text).unwrap();
    let o = run(d.path(), &["--config", "{dir}/c.toml", "--out", "{dir}/s", "simulate"]).unwrap();
    let (h, rows) = read_table_csv(&o.dir.join("echoes.csv")).unwrap();
    let found = h.iter().position(|c| c == "found").unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r[found] == 1.0));
    // Read-back order: the β excitation (source 1) echoes first.
    let t = h.iter().position(|c| c == "t_center").unwrap();
    assert_eq!(rows[0][0], 1.0);
    assert!(rows[0][t] < rows[1][t]);

    let o = run(d.path(), &["--config", "{dir}/c.toml", "--out", "{dir}/y", "synth"]).unwrap();
    for f in ["mode_A.csv", "mode_B.csv", "excitation.csv", "drive.csv"] {
        assert!(o.dir.join(f).is_file(), "{f}");
    }
    let a = read_series_csv(&o.dir.join("mode_A.csv")).unwrap();
    assert!((a.peak() - 200e3).abs() < 1.0);
}

#[test]
fn sweep_peaks_at_the_reference_rate() {
    let d = tempfile::tempdir().unwrap();
    let rates: Vec<String> = (0..7).map(|k| format!("\"{:e} Hz/s\"", 7.5e9 * (0.7 + 0.1 * k as f64))).collect();
    // Spins stay well inside the narrowest B band; band-edge spins swept by B
    // just before 4τ would swamp the echo.
    let ensemble = ENSEMBLE.replace("max = \"200 kHz\"", "max = \"100 kHz\"");
    let text = format!(
        r#"
{ensemble}
[modes.A]
rate = "7.5e9 Hz/s"
duration = "100 us"
amplitude = "200 kHz"

[sweep]
reference = "A"
rates = [{}]
amplitudes = ["200 kHz", "210 kHz"]
"#,
        rates.join(", ")
    );
    std::fs::write(d.path().join("c.toml"), text).unwrap();
    let o = run(d.path(), &["--config", "{dir}/c.toml", "--out", "{dir}/w", "sweep"]).unwrap();
    let (_, rows) = read_table_csv(&o.dir.join("sweep.csv")).unwrap();
    assert_eq!(rows.len(), 14);
    let first: Vec<&Vec<f64>> = rows.iter().filter(|r| r[0] == 200e3).collect();
    let best = first.iter().max_by(|a, b| a[2].total_cmp(&b[2])).unwrap();
    assert!((best[1] / 7.5e9 - 1.0).abs() < 0.15, "peak at {}", best[1]);
}

#[test]
fn fit_fano_recovers_resonator() {
    let d = tempfile::tempdir().unwrap();
    let r = ResonatorParams { fano_k: -2.0e5, fano_q: 0.6, slope: 2e-10, offset: -0.5, ..ResonatorParams::from_quality_factor(7.09395e9, 18400.0).unwrap() };
    let f: Vec<f64> = (0..301).map(|i| r.f0 + (i as f64 / 300.0 - 0.5) * 12.0 * r.kappa).collect();
    write_lineshape_csv(&d.path().join("s21.csv"), &f, &fano_transmission(&f, &r)).unwrap();
    let o = run(d.path(), &["--out", "{dir}/f", "fit", "fano", "{dir}/s21.csv"]).unwrap();
    let fit: FanoFit = json(&o.dir.join("fit.json"));
    assert!((fit.params.f0 / r.f0 - 1.0).abs() < 1e-3);
    assert!((fit.params.kappa / r.kappa - 1.0).abs() < 1e-3);
}

#[test]
fn fit_modemap_counts_cells_of_synthetic_ridges() {
    let d = tempfile::tempdir().unwrap();
    let mut rows = Vec::new();
    // Ridges of constant relative width 0.1 R through each reference.
    for r_ref in [3e9, 6e9, 1.2e10] {
        for a_b in [3e5, 3.15e5] {
            let center = r_ref * (1.0 + (a_b - 3e5) / 1e5);
            for k in 0..25 {
                let r = r_ref * (0.6 + 0.8 * k as f64 / 24.0);
                let x = (r - center) / (0.1 * r_ref);
                rows.push(vec![r_ref, 3e5, a_b, r, 0.05 + (-0.5 * x * x).exp()]);
            }
        }
    }
    write_table_csv(&d.path().join("p.csv"), &["r_ref", "a_ref", "a_b", "r_b", "echo"], &rows).unwrap();
    let o = run(
        d.path(),
        &["--out", "{dir}/m", "fit", "modemap", "{dir}/p.csv", "--amplitude", "300 kHz", "--r-min", "2e9 Hz/s", "--r-max", "1.6e10 Hz/s"],
    )
    .unwrap();
    let m: ModeMap = json(&o.dir.join("fit.json"));
    assert_eq!(m.ridges.len(), 6);
    let r0: &RidgeFit = &m.ridges[0];
    assert!((r0.center / 3e9 - 1.0).abs() < 1e-3 && (r0.sigma / 3e8 - 1.0).abs() < 1e-3);
    // σ = 0.1 R: cells grow by 1 + 0.1·√(2 ln 100) per step.
    let grow = 1.0 + 0.1 * (2.0 * 100f64.ln()).sqrt();
    let expect = ((1.6e10f64 / 2e9).ln() / grow.ln()).floor() as usize;
    assert!(m.count.abs_diff(expect) <= 1, "{} vs {expect}", m.count);
    assert_eq!(m.count_both_signs, 2 * m.count);
}
