// Copyright 2026 The chirpmem Authors
// SPDX-License-Identifier: Apache-2.0

//! File formats: waveform/trace/lineshape CSV, generic tables, JSON and the
//! binary trajectory dump.
//!
//! Floats are written in Rust's shortest round-trip exponent form, so a
//! file read back reproduces the in-memory values bit for bit and repeated
//! writes of the same data are byte-identical.
//!
//! Binary trajectory layout (all little-endian):
//!
//! | offset | type      | field                          |
//! |--------|-----------|--------------------------------|
//! | 0      | [u8; 8]   | magic `CHMTRAJ1`               |
//! | 8      | u64       | n_spins                        |
//! | 16     | u64       | n_steps                        |
//! | 24     | f64       | t_start (s)                    |
//! | 32     | f64       | dt (s)                         |
//! | 40     | f64 × 3·n_spins·n_steps | (sx, sy, sz), step-major |

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;
use serde::Serialize;

use crate::ensemble::Trajectory;
use crate::waveforms::{TimeGrid, Waveform};
use crate::{Error, Result};

pub const TRAJECTORY_MAGIC: &[u8; 8] = b"CHMTRAJ1";

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    Ok(BufWriter::new(File::create(path)?))
}

/// Column names for complex time series.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeriesKind {
    /// Drive waveforms: `t,I,Q` in Hz of Rabi frequency.
    Waveform,
    /// Emitted traces and polarizations: `t,Re,Im` in trace units.
    Trace,
}

impl SeriesKind {
    fn columns(self) -> [&'static str; 3] {
        match self {
            SeriesKind::Waveform => ["t", "I", "Q"],
            SeriesKind::Trace => ["t", "Re", "Im"],
        }
    }

    fn units(self) -> &'static str {
        match self {
            SeriesKind::Waveform => "t in s; I, Q in Hz",
            SeriesKind::Trace => "t in s; Re, Im in trace units",
        }
    }
}

pub fn write_series<W: Write>(mut out: W, w: &Waveform, kind: SeriesKind) -> Result<()> {
    writeln!(out, "# dt={:e} s; {}", w.grid.dt, kind.units())?;
    let [a, b, c] = kind.columns();
    writeln!(out, "{a},{b},{c}")?;
    for (i, z) in w.samples.iter().enumerate() {
        writeln!(out, "{:e},{:e},{:e}", w.grid.time(i), z.re, z.im)?;
    }
    Ok(())
}

pub fn write_series_csv(path: &Path, w: &Waveform, kind: SeriesKind) -> Result<()> {
    let mut f = create(path)?;
    write_series(&mut f, w, kind)?;
    f.flush()?;
    Ok(())
}

fn csv_reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(r)
}

fn parse_field(rec: &csv::StringRecord, i: usize, line: usize) -> Result<f64> {
    let s = rec.get(i).ok_or_else(|| Error::Parse { line, reason: format!("missing column {i}") })?;
    s.parse::<f64>().map_err(|e| Error::Parse { line, reason: format!("`{s}`: {e}") })
}

/// Reads a numeric CSV with a header row and `#` comments.
pub fn read_table<R: Read>(r: R) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut rd = csv_reader(r);
    let headers: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for (k, rec) in rd.records().enumerate() {
        let rec = rec?;
        let line = rec.position().map_or(k + 2, |p| p.line() as usize);
        if rec.len() != headers.len() {
            return Err(Error::Parse { line, reason: format!("expected {} columns, got {}", headers.len(), rec.len()) });
        }
        rows.push((0..rec.len()).map(|i| parse_field(&rec, i, line)).collect::<Result<Vec<_>>>()?);
    }
    Ok((headers, rows))
}

pub fn read_table_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    read_table(BufReader::new(File::open(path)?))
}

/// Reads a `t,I,Q` or `t,Re,Im` file back into a waveform on a uniform grid.
pub fn read_series<R: Read>(r: R) -> Result<Waveform> {
    let (headers, rows) = read_table(r)?;
    if headers.len() != 3 {
        return Err(Error::Parse { line: 1, reason: format!("expected 3 columns, got {}", headers.len()) });
    }
    if rows.len() < 2 {
        return Err(Error::Parse { line: 2, reason: "need at least two samples".into() });
    }
    let t0 = rows[0][0];
    let dt = (rows[rows.len() - 1][0] - t0) / (rows.len() - 1) as f64;
    let grid = TimeGrid::new(t0, dt, rows.len())?;
    for (i, row) in rows.iter().enumerate() {
        if (row[0] - grid.time(i)).abs() > 1e-6 * dt {
            return Err(Error::Parse { line: i + 3, reason: "time column is not uniformly spaced".into() });
        }
    }
    Waveform::from_samples(grid, rows.iter().map(|r| Complex64::new(r[1], r[2])).collect())
}

pub fn read_series_csv(path: &Path) -> Result<Waveform> {
    read_series(BufReader::new(File::open(path)?))
}

/// Writes a numeric table with a header row.
pub fn write_table<W: Write>(mut out: W, headers: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    writeln!(out, "{}", headers.join(","))?;
    for row in rows {
        if row.len() != headers.len() {
            return Err(Error::invalid("row", format!("{} values for {} columns", row.len(), headers.len())));
        }
        let cells: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        writeln!(out, "{}", cells.join(","))?;
    }
    Ok(())
}

pub fn write_table_csv(path: &Path, headers: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut f = create(path)?;
    write_table(&mut f, headers, rows)?;
    f.flush()?;
    Ok(())
}

/// Lineshape file with columns `f,|S21|` (Hz, linear magnitude).
pub fn write_lineshape_csv(path: &Path, freqs: &[f64], mags: &[f64]) -> Result<()> {
    if freqs.len() != mags.len() {
        return Err(Error::invalid("lineshape", "frequency and magnitude lengths differ"));
    }
    let rows: Vec<Vec<f64>> = freqs.iter().zip(mags).map(|(&f, &m)| vec![f, m]).collect();
    write_table_csv(path, &["f", "|S21|"], &rows)
}

pub fn read_lineshape_csv(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let (headers, rows) = read_table_csv(path)?;
    if headers.len() != 2 {
        return Err(Error::Parse { line: 1, reason: "lineshape needs columns f,|S21|".into() });
    }
    Ok(rows.into_iter().map(|r| (r[0], r[1])).unzip())
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut f = create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    writeln!(f)?;
    f.flush()?;
    Ok(())
}

pub fn write_trajectory<W: Write>(mut out: W, traj: &Trajectory) -> Result<()> {
    let n_steps = traj.grid.n_samples;
    out.write_all(TRAJECTORY_MAGIC)?;
    out.write_all(&(traj.n_spins as u64).to_le_bytes())?;
    out.write_all(&(n_steps as u64).to_le_bytes())?;
    out.write_all(&traj.grid.t_start.to_le_bytes())?;
    out.write_all(&traj.grid.dt.to_le_bytes())?;
    for step in 0..n_steps {
        for spin in 0..traj.n_spins {
            for v in traj.at(spin, step) {
                out.write_all(&v.to_le_bytes())?;
            }
        }
    }
    Ok(())
}

pub fn write_trajectory_file(path: &Path, traj: &Trajectory) -> Result<()> {
    let mut f = create(path)?;
    write_trajectory(&mut f, traj)?;
    f.flush()?;
    Ok(())
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    Ok(f64::from_bits(read_u64(r)?))
}

pub fn read_trajectory<R: Read>(mut r: R) -> Result<Trajectory> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != TRAJECTORY_MAGIC {
        return Err(Error::Parse { line: 0, reason: "not a trajectory dump (bad magic)".into() });
    }
    let n_spins = read_u64(&mut r)? as usize;
    let n_steps = read_u64(&mut r)? as usize;
    let grid = TimeGrid::new(read_f64(&mut r)?, read_f64(&mut r)?, n_steps)?;
    let mut states = vec![[0.0; 3]; n_spins * n_steps];
    for step in 0..n_steps {
        for spin in 0..n_spins {
            let s = &mut states[spin * n_steps + step];
            for v in s.iter_mut() {
                *v = read_f64(&mut r)?;
            }
        }
    }
    Ok(Trajectory { grid, n_spins, states })
}

pub fn read_trajectory_file(path: &Path) -> Result<Trajectory> {
    read_trajectory(BufReader::new(File::open(path)?))
}
