//! Experiment runner: resolves a configuration, runs one command and writes its
//! artifacts plus `manifest.txt` and `report.json` into the output directory.
//!
//! Exit codes: 0 when every check passes, 2 when a check fails, 3 for configuration
//! errors, 4 when a computation or file write fails.

mod commands;
pub mod config;
pub mod output;

use std::ffi::OsString;
use std::time::Instant;

use clap::Parser;
use serde::{Deserialize, Serialize};

pub use config::{Command, ExperimentConfig, Format};

use crate::error::{Error, Result};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_COMPUTE: i32 = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub measured: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunError {
    pub kind: String,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub command: String,
    pub config_digest: String,
    pub wall_time_s: f64,
    pub checks: Vec<Check>,
    pub artifacts: Vec<String>,
    pub error: Option<RunError>,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.error.is_none() && self.checks.iter().all(|c| c.passed)
    }

    pub fn exit_code(&self) -> i32 {
        match &self.error {
            Some(e) if e.kind == "ConfigError" => EXIT_CONFIG,
            Some(_) => EXIT_COMPUTE,
            None if self.passed() => EXIT_PASS,
            None => EXIT_CHECK_FAILED,
        }
    }
}

/// State threaded through one command.
pub(crate) struct Run {
    pub cfg: ExperimentConfig,
    pub report: RunReport,
}

impl Run {
    pub fn check(&mut self, name: String, passed: bool, measured: serde_json::Value) {
        self.report.checks.push(Check {
            name,
            passed,
            measured,
        });
    }

    pub fn emit(&mut self, format: Format, name: &str, contents: String) -> Result<()> {
        if self.cfg.wants(format) {
            output::write_atomic(&self.cfg.out, name, contents.as_bytes())?;
            self.report.artifacts.push(name.to_string());
        }
        Ok(())
    }
}

/// Runs `command` on an unresolved config. Configuration errors are returned;
/// failures after the output directory is known are recorded in the report.
pub fn run(command: Command, mut cfg: ExperimentConfig) -> Result<RunReport> {
    let start = Instant::now();
    cfg.resolve(command)?;
    let mut run = Run {
        report: RunReport {
            command: command.as_str().to_string(),
            config_digest: cfg.digest(),
            wall_time_s: 0.0,
            checks: Vec::new(),
            artifacts: Vec::new(),
            error: None,
        },
        cfg,
    };
    output::write_atomic(&run.cfg.out, "manifest.txt", run.cfg.manifest().as_bytes())?;
    if let Err(e) = commands::dispatch(&mut run, command) {
        run.report.error = Some(RunError {
            kind: e.name().to_string(),
            message: e.to_string(),
        });
    }
    run.report.wall_time_s = start.elapsed().as_secs_f64();
    let json = serde_json::to_string_pretty(&run.report)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    output::write_atomic(&run.cfg.out, "report.json", json.as_bytes())?;
    Ok(run.report)
}

#[derive(Debug, Parser)]
#[command(
    name = "whslab",
    version,
    about = "Witten deformation experiments on flat tori"
)]
struct Args {
    /// oscillator, spectrum, gap-sweep, morse-complex, inequalities, whs or all
    command: String,
    /// Extra `key=value` settings, applied last.
    overrides: Vec<String>,
    /// Flat `key = value` file, applied before flags.
    #[arg(long)]
    config: Option<std::path::PathBuf>,
    /// `circle`, `torus` or `torus:N`
    #[arg(long)]
    manifold: Option<String>,
    #[arg(long)]
    periods: Option<String>,
    /// `name:params`
    #[arg(long)]
    field: Option<String>,
    #[arg(long)]
    harmonic: Option<String>,
    #[arg(long)]
    grid: Option<String>,
    /// One value or a comma list.
    #[arg(long)]
    t: Option<String>,
    /// `a:b:step`
    #[arg(long = "t-grid")]
    t_grid: Option<String>,
    #[arg(long)]
    q: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    out: Option<String>,
    /// Comma list of csv, json, svg.
    #[arg(long)]
    format: Option<String>,
    /// `pi-over-t` or `t-over-pi`
    #[arg(long = "scaling-convention")]
    scaling_convention: Option<String>,
}

fn build_config(args: &Args) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.apply_text(&text)?;
    }
    let flags = [
        ("manifold", &args.manifold),
        ("periods", &args.periods),
        ("field", &args.field),
        ("harmonic", &args.harmonic),
        ("grid", &args.grid),
        ("t", &args.t),
        ("t-grid", &args.t_grid),
        ("q", &args.q),
        ("seed", &args.seed),
        ("out", &args.out),
        ("format", &args.format),
        ("scaling-convention", &args.scaling_convention),
    ];
    for (k, v) in flags {
        if let Some(v) = v {
            cfg.set(k, v)?;
        }
    }
    for kv in &args.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("expected key=value, got `{kv}`")))?;
        cfg.set(k, v)?;
    }
    Ok(cfg)
}

/// Entry point shared by the binary and tests. Returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(args) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                EXIT_CONFIG
            } else {
                EXIT_PASS
            };
        }
    };
    let outcome = Command::parse(&args.command)
        .and_then(|c| build_config(&args).map(|cfg| (c, cfg)))
        .and_then(|(c, cfg)| run(c, cfg));
    match outcome {
        Ok(report) => {
            for c in &report.checks {
                println!("{} {}", if c.passed { "PASS" } else { "FAIL" }, c.name);
            }
            if let Some(e) = &report.error {
                eprintln!("error [{}]: {}", e.kind, e.message);
            }
            report.exit_code()
        }
        Err(e) => {
            eprintln!("error [{}]: {e}", e.name());
            match e {
                Error::Config(_) => EXIT_CONFIG,
                _ => EXIT_COMPUTE,
            }
        }
    }
}
