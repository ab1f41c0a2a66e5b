// SPDX-License-Identifier: MIT OR Apache-2.0

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use manifest::Manifest;

#[derive(Parser, Debug)]
#[command(name = "rscusum", version, about = "Robust score-based change detection")]
struct Cli {
    /// Seed overriding every seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (default: available cores). Results do not depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Append-only JSON-lines run log.
    #[arg(long, global = true, default_value = "rscusum-manifest.jsonl")]
    manifest: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Search for the least-favorable post-change model.
    Lfd(ConfigOut),
    /// Calibrate the score multiplier on pre-change data.
    Calibrate(ConfigOut),
    /// Run a detector over a CSV stream and print the outcome as JSON.
    Detect(DetectArgs),
    /// Run an EDD-vs-ARL sweep.
    Bench(BenchArgs),
    /// Synthesize a change-point stream as CSV.
    Sample(ConfigOut),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Lfd(_) => "lfd",
            Command::Calibrate(_) => "calibrate",
            Command::Detect(_) => "detect",
            Command::Bench(_) => "bench",
            Command::Sample(_) => "sample",
        }
    }
}

#[derive(Args, Debug)]
struct ConfigOut {
    /// JSON config file.
    #[arg(long)]
    config: PathBuf,
    /// Output file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
pub struct DetectArgs {
    /// Pre-change model JSON.
    #[arg(long)]
    pre: PathBuf,
    /// Post-change model JSON, or an LFD result.
    #[arg(long)]
    post: PathBuf,
    /// Stream CSV with header `t,x_1,..,x_d`; `-` reads standard input.
    #[arg(long, default_value = "-")]
    input: PathBuf,
    #[arg(long, default_value = "rscusum")]
    kind: String,
    /// Score multiplier (ignored by cusum).
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long)]
    tau: f64,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Sweep config JSON.
    #[arg(long)]
    config: PathBuf,
    /// Directory for `sweep.csv`, `summary.json` and `edd_vs_logarl.dat`.
    #[arg(long)]
    out_dir: PathBuf,
    /// Also write gnuplot data.
    #[arg(long)]
    gnuplot: bool,
    /// Override the number of trials.
    #[arg(long)]
    trials: Option<usize>,
}

/// Failure classes mapped to exit codes 1 and 2.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Runtime(m) => m,
        }
    }
}

impl From<rscusum::Error> for Failure {
    fn from(e: rscusum::Error) -> Self {
        if e.is_usage() {
            Failure::Usage(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(j) = cli.jobs {
        if j == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(j).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }

    let mut manifest = Manifest::start(&cli);
    let outcome = match &cli.command {
        Command::Lfd(a) => commands::lfd(&a.config, &a.out, cli.seed, &mut manifest),
        Command::Calibrate(a) => commands::calibrate(&a.config, &a.out, cli.seed, &mut manifest),
        Command::Detect(a) => commands::detect(a, &mut manifest),
        Command::Bench(a) => commands::bench(a, cli.seed, &mut manifest),
        Command::Sample(a) => commands::sample(&a.config, &a.out, cli.seed, &mut manifest),
    };
    let code = match &outcome {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {}", f.message());
            f.code()
        }
    };
    if let Err(e) = manifest.finish(code, outcome.err().map(|f| f.message().to_string()), &cli.manifest) {
        eprintln!("warning: could not append manifest: {e}");
    }
    ExitCode::from(code)
}
