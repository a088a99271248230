//! Command-line experiments: configuration, subcommands and result emission.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use hyperlat::latenum::write_atomic;
use serde::Serialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub mod commands;
pub mod config;

pub use config::RunConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("computation failed: {0}")]
    Compute(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Compute(_) | CliError::Io(_) => 1,
        }
    }
}

/// Wrap any displayable error as a computation failure with context.
pub(crate) fn compute<E: std::fmt::Display>(ctx: &str) -> impl FnOnce(E) -> CliError + '_ {
    move |e| CliError::Compute(format!("{ctx}: {e}"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Enumerate,
    Approx,
    Exponent,
    Volumes,
    Spherical,
    Decay,
    Tracesim,
    Zaremba,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Enumerate => "enumerate",
            Command::Approx => "approx",
            Command::Exponent => "exponent",
            Command::Volumes => "volumes",
            Command::Spherical => "spherical",
            Command::Decay => "decay",
            Command::Tracesim => "tracesim",
            Command::Zaremba => "zaremba",
        }
    }
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Sub {
    /// Unit group elements in a product of balls, with cumulative counts.
    Enumerate,
    /// A single least-height approximation search.
    Approx,
    /// Approximation exponents over seeded pairs and an eps ladder.
    Exponent,
    /// Ball volumes and the matching-volume schedule.
    Volumes,
    /// Spherical functions and transform cross-checks.
    Spherical,
    /// Decay constants of the small- and large-scale test functions.
    Decay,
    /// Trace-estimator scaling on a synthetic spectrum.
    Tracesim,
    /// Integration-by-parts identity on random atomic measures.
    Zaremba,
}

impl From<Sub> for Command {
    fn from(s: Sub) -> Self {
        match s {
            Sub::Enumerate => Command::Enumerate,
            Sub::Approx => Command::Approx,
            Sub::Exponent => Command::Exponent,
            Sub::Volumes => Command::Volumes,
            Sub::Spherical => Command::Spherical,
            Sub::Decay => Command::Decay,
            Sub::Tracesim => Command::Tracesim,
            Sub::Zaremba => Command::Zaremba,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "hyperlat", version, about = "Quaternion lattice and spherical-transform experiments")]
struct Args {
    #[command(subcommand)]
    command: Sub,
    /// JSON configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "hyperlat-out")]
    out: PathBuf,
    /// Override every seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for parallel sections.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

/// What a subcommand produced, before anything is written.
#[derive(Debug, Default)]
pub struct Outcome {
    pub files: Vec<(String, Vec<u8>)>,
    pub checks: Vec<Check>,
    pub summary: Map<String, Value>,
}

impl Outcome {
    pub fn file(&mut self, name: &str, bytes: impl Into<Vec<u8>>) {
        self.files.push((name.into(), bytes.into()));
    }

    pub fn check(&mut self, c: Check) {
        self.checks.push(c);
    }

    pub fn note(&mut self, key: &str, v: impl Into<Value>) {
        self.summary.insert(key.into(), v.into());
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FileEntry {
    pub name: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub command: String,
    pub status: String,
    pub checks: Vec<Check>,
    pub summary: Map<String, Value>,
    pub config_hash: String,
    pub config: Value,
    pub versions: Map<String, Value>,
    pub files: Vec<FileEntry>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.status == "PASS"
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn sha_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<(), CliError> {
    let p = dir.join(name);
    write_atomic(&p, bytes).map_err(|e| CliError::Io(format!("writing {}: {e}", p.display())))
}

/// Run one subcommand and write its files and `manifest.json` into `out`.
pub fn execute(cmd: Command, cfg: &RunConfig, out: &Path) -> Result<Report, CliError> {
    cfg.validate()?;
    let outcome = commands::dispatch(cmd, cfg)?;
    std::fs::create_dir_all(out).map_err(|e| CliError::Io(format!("creating {}: {e}", out.display())))?;
    let mut files = Vec::with_capacity(outcome.files.len());
    for (name, bytes) in &outcome.files {
        write_file(out, name, bytes)?;
        files.push(FileEntry {
            name: name.clone(),
            sha256: sha_hex(bytes),
            bytes: bytes.len(),
        });
    }
    let mut versions = Map::new();
    versions.insert("hyperlat".into(), hyperlat::VERSION.into());
    versions.insert("hyperlat-cli".into(), env!("CARGO_PKG_VERSION").into());
    let report = Report {
        command: cmd.name().into(),
        status: if outcome.checks.iter().all(|c| c.passed) { "PASS" } else { "FAIL" }.into(),
        checks: outcome.checks,
        summary: outcome.summary,
        config_hash: cfg.hash(),
        config: serde_json::to_value(cfg).expect("configuration serialises"),
        versions,
        files,
    };
    let mut manifest = serde_json::to_string_pretty(&report).expect("report serialises");
    manifest.push('\n');
    write_file(out, "manifest.json", manifest.as_bytes())?;
    Ok(report)
}

/// Parse arguments, run, print a short report and return the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(args) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run_parsed(&args) {
        Ok(report) => {
            for c in &report.checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            println!("{} {} -> {}", report.status, report.command, args.out.join("manifest.json").display());
            if report.passed() {
                0
            } else {
                1
            }
        }
        Err(e) => {
            eprintln!("hyperlat {}: {e}", Command::from(args.command).name());
            e.exit_code()
        }
    }
}

fn run_parsed(args: &Args) -> Result<Report, CliError> {
    if let Some(n) = args.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        // Fails only if the pool already exists, as when called twice in one process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let mut cfg = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = args.seed {
        cfg = cfg.with_seed(s);
    }
    execute(args.command.into(), &cfg, &args.out)
}
