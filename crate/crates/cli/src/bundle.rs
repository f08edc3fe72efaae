// Copyright 2026 The chirpmem Authors
// SPDX-License-Identifier: Apache-2.0

//! Run directory: CSV and JSON outputs plus a manifest.
//!
//! Files are never replaced. The manifest lists every file with its SHA-256
//! and carries no timestamps, so identical runs give identical directories.

use std::path::{Path, PathBuf};

use chirpmem::io::{write_series, write_table, SeriesKind};
use chirpmem::waveforms::Waveform;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub const MANIFEST_SCHEMA: &str = "chirpmem.manifest/1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub schema: &'static str,
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub seed: u64,
    pub config_sha256: String,
    pub files: Vec<FileEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub struct Bundle {
    dir: PathBuf,
    files: Vec<FileEntry>,
}

impl Bundle {
    pub fn create(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Self { dir: dir.to_path_buf(), files: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn files(&self) -> &[FileEntry] {
        &self.files
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        if path.exists() {
            return Err(CliError::Exists(path.display().to_string()));
        }
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        std::fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        self.files.push(FileEntry { path: name.to_string(), bytes: bytes.len(), sha256: sha256_hex(bytes) });
        Ok(())
    }

    pub fn series(&mut self, name: &str, w: &Waveform, kind: SeriesKind) -> Result<()> {
        let mut buf = Vec::new();
        write_series(&mut buf, w, kind)?;
        self.write_bytes(name, &buf)
    }

    pub fn table(&mut self, name: &str, headers: &[&str], rows: &[Vec<f64>]) -> Result<()> {
        let mut buf = Vec::new();
        write_table(&mut buf, headers, rows)?;
        self.write_bytes(name, &buf)
    }

    pub fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut buf = serde_json::to_vec_pretty(value)?;
        buf.push(b'\n');
        self.write_bytes(name, &buf)
    }

    /// Writes `manifest.json` and closes the bundle.
    pub fn finish(mut self, command: &str, seed: u64, config_text: &str) -> Result<Manifest> {
        let m = Manifest {
            schema: MANIFEST_SCHEMA,
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            seed,
            config_sha256: sha256_hex(config_text.as_bytes()),
            files: self.files.clone(),
        };
        self.json("manifest.json", &m)?;
        Ok(m)
    }
}
