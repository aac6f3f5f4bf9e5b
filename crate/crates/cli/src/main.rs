//! `oqsim`: batch runner for evolve-reset open-system experiments.
//!
//! Exit codes: 0 success, 1 acceptance miss in `verify`, 2 configuration
//! error, 3 numerical failure. `OQSIM_THREADS` sets the worker count.

mod config;
mod experiments;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use serde_json::json;
use sha2::{Digest, Sha256};

use oqsim_core::exec::Execution;

use config::SchemaError;
use experiments::{Failure, Outcome};

#[derive(Parser)]
#[command(name = "oqsim", version, about = "Evolve-reset open quantum system simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML configuration; defaults to the bundled two-level example.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `evolution.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides `output.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// `section.key=value`, applied in order before validation.
    #[arg(long = "override", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Relaxation and dephasing runs with fitted T1, T2 and oracle curves.
    Relax,
    /// Simulated 1/T1 across a range of system frequencies.
    RateScan,
    /// Telegraph-noise dephasing ensemble and noise spectrum estimate.
    Dephase,
    /// Qubit and gate counts for the configured model.
    Resources,
    /// Full acceptance suite.
    Verify,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Relax => "relax",
            Command::RateScan => "rate-scan",
            Command::Dephase => "dephase",
            Command::Resources => "resources",
            Command::Verify => "verify",
        }
    }
}

const BUNDLED: &str = include_str!("../configs/worked_example.toml");

enum Exit {
    Acceptance,
    Schema(String),
    Numerical(String),
}

impl From<SchemaError> for Exit {
    fn from(e: SchemaError) -> Self {
        Exit::Schema(e.0)
    }
}

impl From<Failure> for Exit {
    fn from(f: Failure) -> Self {
        match f {
            Failure::Schema(s) => Exit::Schema(s),
            Failure::Numerical(s) => Exit::Numerical(s),
        }
    }
}

fn execution() -> Result<Execution, Exit> {
    let Ok(raw) = std::env::var("OQSIM_THREADS") else {
        return Ok(Execution::Parallel);
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n >= 1)
        .ok_or_else(|| Exit::Schema(format!("OQSIM_THREADS: expected a positive integer, got `{raw}`")))?;
    if n == 1 {
        return Ok(Execution::Sequential);
    }
    // results are reduced in index order, so the pool size never changes output
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Exit::Numerical(format!("thread pool: {e}")))?;
    Ok(Execution::Parallel)
}

fn write_outputs(dir: &Path, prefix: &str, cmd: Command, outcome: &Outcome, manifest: serde_json::Value) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for (name, contents) in &outcome.files {
        let path = dir.join(name);
        std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    }
    let summary = json!({ "manifest": manifest, "result": outcome.summary });
    let path = dir.join(format!("{prefix}{}_summary.json", cmd.name().replace('-', "_")));
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn run(cli: Cli) -> Result<(), Exit> {
    let text = match &cli.config {
        Some(p) => std::fs::read_to_string(p).map_err(|e| Exit::Schema(format!("config {}: {e}", p.display())))?,
        None => BUNDLED.to_string(),
    };
    let mut overrides = cli.overrides.clone();
    if let Some(seed) = cli.seed {
        overrides.push(format!("evolution.seed={seed}"));
    }
    if let Some(out) = &cli.out {
        overrides.push(format!("output.dir={:?}", out.display().to_string()));
    }
    let loaded = config::load(&text, &overrides)?;
    let cfg = &loaded.config;
    let exec = execution()?;

    let outcome = match cli.command {
        Command::Relax => experiments::relax(cfg, exec)?,
        Command::RateScan => experiments::rate_scan(cfg, exec)?,
        Command::Dephase => experiments::dephase(cfg, exec)?,
        Command::Resources => experiments::resources(cfg)?,
        Command::Verify => experiments::verify_all(exec),
    };

    let manifest = json!({
        "tool": "oqsim",
        "version": env!("CARGO_PKG_VERSION"),
        "subcommand": cli.command.name(),
        "seed": cfg.evolution.seed,
        "config_sha256": format!("{:x}", Sha256::digest(loaded.canonical.as_bytes())),
        "config": loaded.canonical,
    });
    let dir = Path::new(&cfg.output.dir);
    write_outputs(dir, &cfg.output.prefix, cli.command, &outcome, manifest)
        .map_err(|e| Exit::Numerical(format!("{e:#}")))?;
    println!("{}", outcome.report);
    if outcome.accepted {
        Ok(())
    } else {
        Err(Exit::Acceptance)
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Exit::Acceptance) => {
            eprintln!("acceptance criteria not met");
            ExitCode::from(1)
        }
        Err(Exit::Schema(msg)) => {
            eprintln!("configuration error: {msg}");
            ExitCode::from(2)
        }
        Err(Exit::Numerical(msg)) => {
            eprintln!("numerical failure: {msg}");
            ExitCode::from(3)
        }
    }
}
