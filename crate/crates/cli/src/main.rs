//! `amctl`: trim, controllability analysis and simulation of a multirotor
//! carrying a two-link arm.
//!
//! Exit status is 0 on success, 2 for bad input and 3 when the numerics fail.
//! Errors are printed to stderr as JSON and, when `--out` is given, also
//! written to `error.json` there.

mod commands;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use amctl::controllability::SCHEMA_VERSION;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use config::RunConfig;

#[derive(Parser)]
#[command(name = "amctl", version, about = "Aerial manipulator controllability toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for the hover equilibrium at the configured arm pose.
    Equilibrium(Common),
    /// Rank and good/bad bracket tests at the equilibrium.
    Analyze {
        #[command(flatten)]
        common: Common,
        /// maximum bracket degree
        #[arg(long)]
        degree: Option<usize>,
        /// relative singular-value cutoff for numerical rank
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Integrate the reduced dynamics and reconstruct the pose.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dt: Option<f64>,
        /// simulated time, s
        #[arg(long)]
        horizon: Option<f64>,
        /// also run the full-coordinate Lagrangian and compare
        #[arg(long)]
        oracle: bool,
    },
    /// List the Hall basis and its good/bad classification.
    Brackets {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        degree: Option<usize>,
    },
}

#[derive(Args)]
struct Common {
    /// JSON run configuration
    #[arg(long)]
    config: Option<PathBuf>,
    /// output directory (created if missing)
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

/// A failure with its exit status.
#[derive(Debug)]
pub struct Failure {
    kind: String,
    message: String,
    code: u8,
}

impl Failure {
    pub fn config(kind: &str, message: String) -> Self {
        Self {
            kind: kind.into(),
            message,
            code: 2,
        }
    }
}

impl From<amctl::Error> for Failure {
    fn from(e: amctl::Error) -> Self {
        Self {
            kind: e.kind().into(),
            message: e.to_string(),
            code: if e.is_config() { 2 } else { 3 },
        }
    }
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    schema_version: u32,
    version: &'a str,
    error: ErrorBody<'a>,
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    kind: &'a str,
    message: &'a str,
    exit_code: u8,
}

fn report_failure(f: &Failure, out: Option<&Path>) {
    let report = ErrorReport {
        schema_version: SCHEMA_VERSION,
        version: amctl::VERSION,
        error: ErrorBody {
            kind: &f.kind,
            message: &f.message,
            exit_code: f.code,
        },
    };
    let text = amctl::json::to_string(&report).expect("error report serializes");
    eprint!("{text}");
    if let Some(dir) = out {
        // best effort: the directory itself may be the problem
        let _ = std::fs::write(dir.join("error.json"), &text);
    }
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Equilibrium(c) => c,
            Command::Analyze { common, .. }
            | Command::Simulate { common, .. }
            | Command::Brackets { common, .. } => common,
        }
    }

    /// Command-line flags win over the config file.
    fn apply(&self, cfg: &mut RunConfig) {
        match *self {
            Command::Equilibrium(_) => {}
            Command::Analyze { degree, tol, .. } => {
                cfg.degree = degree.unwrap_or(cfg.degree);
                cfg.tolerances.rank_rel = tol.unwrap_or(cfg.tolerances.rank_rel);
            }
            Command::Simulate { dt, horizon, .. } => {
                cfg.dt = dt.unwrap_or(cfg.dt);
                cfg.horizon = horizon.unwrap_or(cfg.horizon);
            }
            Command::Brackets { degree, .. } => cfg.degree = degree.unwrap_or(cfg.degree),
        }
    }
}

fn run(command: &Command) -> Result<(), Failure> {
    let out = &command.common().out;
    let mut cfg = RunConfig::load(command.common().config.as_deref())?;
    command.apply(&mut cfg);
    cfg.validate()?;
    std::fs::create_dir_all(out).map_err(|e| Failure::config("Io", format!("{}: {e}", out.display())))?;
    match command {
        Command::Equilibrium(_) => commands::equilibrium(&cfg, out),
        Command::Analyze { .. } => commands::analyze(&cfg, out),
        Command::Simulate { oracle, .. } => commands::simulate(&cfg, out, *oracle),
        Command::Brackets { .. } => commands::brackets(&cfg, out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let out = &cli.command.common().out;
            report_failure(&f, out.is_dir().then_some(out.as_path()));
            ExitCode::from(f.code)
        }
    }
}
