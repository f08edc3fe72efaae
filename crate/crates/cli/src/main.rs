// Copyright 2026 The chirpmem Authors
// SPDX-License-Identifier: Apache-2.0

use std::process::ExitCode;

use chirpmem_cli::commands::{run, Cli};
use clap::Parser;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(o) => {
            println!("wrote {} files to {}", o.manifest.files.len(), o.dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("chirpmem: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
