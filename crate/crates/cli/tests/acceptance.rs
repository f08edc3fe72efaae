// Copyright 2026 The chirpmem Authors
// SPDX-License-Identifier: Apache-2.0

//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
//! Full-size figure runs go through the command-line entry point.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use chirpmem::cavity::one_way_efficiency;
use chirpmem_cli::commands::run_args;
use serde_json::Value;

struct Report {
    failed: usize,
}

impl Report {
    fn check(&mut self, name: &str, ok: bool, detail: String) {
        println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
        if !ok {
            self.failed += 1;
        }
    }
}

fn reproduce(dir: &Path, fig: &str, extra: &[&str]) -> Result<Value, String> {
    let out = dir.join(fig);
    let mut args = vec!["chirpmem".to_string(), "--out".into(), out.display().to_string()];
    args.extend(extra.iter().map(|s| s.to_string()));
    args.extend(["reproduce".to_string(), fig.to_string()]);
    run_args(args).map_err(|e| e.to_string())?;
    let text = std::fs::read_to_string(out.join("summary.json")).map_err(|e| e.to_string())?;
    serde_json::from_str(&text).map_err(|e| e.to_string())
}

fn f(v: &Value) -> f64 {
    v.as_f64().unwrap_or(f64::NAN)
}

fn fig1(r: &mut Report, dir: &Path) {
    let t = Instant::now();
    match reproduce(dir, "fig1", &[]) {
        Ok(s) => {
            let secs = t.elapsed().as_secs_f64();
            let ratio = f(&s["silenced_ratio"]);
            r.check(
                "silencing",
                s["n_spins"] == 10000 && ratio < 0.02,
                format!("{} spins, first refocus / echo = {ratio:.4} (< 0.02)", s["n_spins"]),
            );
            r.check("silencing runtime", secs < 300.0, format!("{secs:.0} s (< 300 s)"));
        }
        Err(e) => r.check("silencing", false, e),
    }
}

fn fig2(r: &mut Report, dir: &Path) {
    match reproduce(dir, "fig2", &[]) {
        Ok(s) => {
            let rows = s["rows"].as_array().cloned().unwrap_or_default();
            let pairs: Vec<(f64, f64)> = rows.iter().map(|x| (f(&x["linewidth"]), f(&x["chi"]))).collect();
            let narrow = pairs.iter().filter(|p| p.0 <= 100e3).all(|p| p.1 >= 0.95);
            // Non-increasing up to 0.02 of sampling noise, with a net drop over the sweep.
            let monotone = pairs.windows(2).all(|w| w[1].1 <= w[0].1 + 0.02);
            let drop = pairs.first().zip(pairs.last()).is_some_and(|(a, b)| b.1 < a.1 - 0.3);
            let shown: Vec<String> = pairs.iter().map(|p| format!("{:.0}k:{:.3}", p.0 / 1e3, p.1)).collect();
            r.check("pair recovery", narrow && monotone && drop, format!("chi {}", shown.join(" ")));

            let a = &s["abba"];
            let order: Vec<u64> = a["order"].as_array().map(|v| v.iter().filter_map(Value::as_u64).collect()).unwrap_or_default();
            let found = a["echoes"].as_array().is_some_and(|e| e.len() == 2 && e.iter().all(|x| x["found"] == true));
            let sp = &a["spurious"];
            r.check(
                "ABBA random access",
                found && order == [1, 0] && sp["count"] == 0,
                format!(
                    "order {order:?} (beta then alpha), spurious {} above 5x floor, largest off-window {:.2}x floor",
                    sp["count"],
                    f(&sp["max_over_floor"])
                ),
            );
        }
        Err(e) => r.check("pair recovery", false, e),
    }
}

fn fig2e(r: &mut Report, dir: &Path) {
    match reproduce(dir, "fig2e", &[]) {
        Ok(s) => {
            let tm = f(&s["silenced_fit"]["time_constant"]);
            let tm2 = f(&s["emission_fit"]["time_constant"]);
            let eta = f(&s["emission_fit"]["eta_em"]);
            let ok = (tm / 2e-3 - 1.0).abs() < 0.1 && (tm2 / 2e-3 - 1.0).abs() < 0.1 && (eta - 0.17).abs() < 0.03;
            r.check("DD decay models", ok, format!("T_M = {:.4} ms, eta_em = {eta:.4} (truth 2.0 ms, 0.17)", tm * 1e3));
        }
        Err(e) => r.check("DD decay models", false, e),
    }
}

fn efficiency(r: &mut Report) {
    let eta = one_way_efficiency(0.047).unwrap();
    let grid: Vec<f64> = (-200..=200).map(|k| 10f64.powf(k as f64 / 100.0)).collect();
    let (c_best, v_best) = grid
        .iter()
        .map(|&c| (c, one_way_efficiency(c).unwrap()))
        .fold((0.0, f64::MIN), |a, b| if b.1 > a.1 { b } else { a });
    r.check(
        "efficiency formula",
        (eta - 0.171).abs() <= 0.001 && c_best == 1.0 && v_best == 1.0,
        format!("eta(0.047) = {eta:.4}, max {v_best} at C = {c_best}"),
    );
}

fn fig3(r: &mut Report, dir: &Path) {
    match reproduce(dir, "fig3", &[]) {
        Ok(s) => {
            let rows = s["rows"].as_array().cloned().unwrap_or_default();
            let storage: Vec<f64> = rows.iter().map(|x| f(&x["storage_time"])).collect();
            let in_range = storage.iter().all(|&t| (0.5e-3..=2.5e-3).contains(&t));
            let err = f(&s["max_phase_error"]);
            let found = rows.len() == 4 && rows.iter().all(|x| x["found"] == true);
            let ok = found && in_range && s["all_assigned"] == true && err < 0.1 && s["spurious"]["count"] == 0;
            let st: Vec<String> = storage.iter().map(|t| format!("{:.2}", t * 1e3)).collect();
            r.check(
                "random access end-to-end",
                ok,
                format!("storage [{}] ms, max phase error {err:.3} rad, spurious {}", st.join(", "), s["spurious"]["count"]),
            );
        }
        Err(e) => r.check("random access end-to-end", false, e),
    }
}

fn fifo(r: &mut Report, dir: &Path) {
    match reproduce(dir, "fifo", &[]) {
        Ok(s) => {
            let order: Vec<u64> = s["order"].as_array().map(|v| v.iter().filter_map(Value::as_u64).collect()).unwrap_or_default();
            let err = f(&s["max_phase_error"]);
            r.check("FIFO", order == [0, 1, 2, 3, 4] && err < 0.1, format!("order {order:?}, max phase error {err:.3} rad"));
        }
        Err(e) => r.check("FIFO", false, e),
    }
}

fn fig4(r: &mut Report, dir: &Path) {
    match reproduce(dir, "fig4", &[]) {
        Ok(s) => {
            let o = &s["oracle"];
            let frac = f(&o["fraction_within"]);
            r.check(
                "adiabatic oracle equivalence",
                frac >= 0.95,
                format!("{:.1}% of {} in-band spins within 0.05 rad", 100.0 * frac, o["eligible"]),
            );
            let (c, cr) = (s["count"].as_u64().unwrap_or(0), s["refined_count"].as_u64().unwrap_or(0));
            r.check(
                "mode counting",
                (5..=12).contains(&c) && c.abs_diff(cr) <= 1,
                format!("{c} modes per chirp direction, {cr} after refinement, {} both directions", s["coarse"]["count_both_signs"]),
            );
        }
        Err(e) => r.check("adiabatic oracle equivalence", false, e),
    }
}

/// Every file of a bundle by name.
fn bundle_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        out.insert(p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap());
    }
    out
}

const SMALL_FIG4: &str = r#"
[fig4]
n_spins = 60
references = ["6e9 Hz/s"]

[fig4.oracle]
n_spins = 40
"#;

fn determinism(r: &mut Report, dir: &Path) {
    let cfg = dir.join("small.toml");
    std::fs::write(&cfg, SMALL_FIG4).unwrap();
    let cfg = cfg.display().to_string();
    let mut mismatched = Vec::new();
    for (fig, spins) in [("fig1", "400"), ("fig2", "200"), ("fig2e", "100"), ("fig3", "300"), ("fig4", "60"), ("fifo", "300")] {
        let mut bundles = Vec::new();
        for (k, threads) in ["1", "3", "3"].iter().enumerate() {
            let d = dir.join(format!("det{k}"));
            let args = ["--config", cfg.as_str(), "--spins", spins, "--threads", threads];
            match reproduce(&d, fig, &args) {
                Ok(_) => bundles.push(bundle_bytes(&d.join(fig))),
                Err(e) => mismatched.push(format!("{fig}: {e}")),
            }
        }
        if bundles.len() == 3 && !(bundles[0] == bundles[1] && bundles[1] == bundles[2]) {
            mismatched.push(fig.to_string());
        }
    }
    r.check(
        "determinism",
        mismatched.is_empty(),
        if mismatched.is_empty() {
            "all six bundles byte-identical over two runs and 1 vs 3 threads".into()
        } else {
            format!("differs: {}", mismatched.join(", "))
        },
    );
}

fn main() {
    // Under `cargo test -- --list` only report that this target has no listable tests.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let mut r = Report { failed: 0 };
    fig1(&mut r, dir);
    fig2(&mut r, dir);
    fig2e(&mut r, dir);
    efficiency(&mut r);
    fig3(&mut r, dir);
    fifo(&mut r, dir);
    fig4(&mut r, dir);
    determinism(&mut r, dir);
    if r.failed > 0 {
        println!("{} acceptance criteria failed", r.failed);
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
