// SPDX-License-Identifier: MIT OR Apache-2.0

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::Cli;

/// One JSON line per invocation, appended to the manifest file.
#[derive(Serialize, Debug)]
pub struct Manifest {
    subcommand: String,
    args: Vec<String>,
    config_path: Option<PathBuf>,
    /// Fully resolved config, seeds included.
    config: serde_json::Value,
    seeds: Vec<u64>,
    versions: serde_json::Value,
    outputs: Vec<PathBuf>,
    started_unix: f64,
    wall_clock_secs: f64,
    exit_code: u8,
    error: Option<String>,
    #[serde(skip)]
    clock: Option<Instant>,
}

impl Manifest {
    pub fn start(cli: &Cli) -> Self {
        Self {
            subcommand: cli.command.name().to_string(),
            args: std::env::args().collect(),
            config_path: None,
            config: serde_json::Value::Null,
            seeds: Vec::new(),
            versions: serde_json::json!({
                "rscusum": env!("CARGO_PKG_VERSION"),
            }),
            outputs: Vec::new(),
            started_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs_f64())
                .unwrap_or(0.0),
            wall_clock_secs: 0.0,
            exit_code: 0,
            error: None,
            clock: Some(Instant::now()),
        }
    }

    pub fn config(&mut self, path: &Path, resolved: impl Serialize) {
        self.config_path = Some(path.to_path_buf());
        self.config = serde_json::to_value(resolved).unwrap_or(serde_json::Value::Null);
    }

    pub fn seed(&mut self, seed: u64) {
        self.seeds.push(seed);
    }

    pub fn output(&mut self, path: impl Into<PathBuf>) {
        self.outputs.push(path.into());
    }

    pub fn finish(mut self, code: u8, error: Option<String>, path: &Path) -> std::io::Result<()> {
        self.exit_code = code;
        self.error = error;
        self.wall_clock_secs = self.clock.map(|c| c.elapsed().as_secs_f64()).unwrap_or(0.0);
        let line = serde_json::to_string(&self).map_err(std::io::Error::other)?;
        let mut f = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
        writeln!(f, "{line}")
    }
}
