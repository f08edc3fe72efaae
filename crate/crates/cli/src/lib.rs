// Copyright 2026 The chirpmem Authors
// SPDX-License-Identifier: Apache-2.0

//! Configuration, experiment dispatch and output bundles for the `chirpmem`
//! command-line tool.

pub mod bundle;
pub mod commands;
pub mod config;
pub mod error;
pub mod experiments;
pub mod quantity;

pub use error::{CliError, Result};
