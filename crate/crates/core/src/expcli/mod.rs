//! Experiment runner behind the `airdp` binary.
//!
//! Every output file starts with the tool version and the fully resolved
//! configuration, so a rerun with that configuration reproduces it bit for bit.

pub mod config;
pub mod experiments;
pub mod output;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

pub use config::ExperimentConfig;
pub use experiments::Report;
pub use output::{Cell, Table};

use crate::error::{AirdpError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    PrivacySweep,
    Compose,
    LocalDpTable,
    Bounds,
    Train,
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;

/// Exit code for an error: configuration and input problems map to 2.
pub fn exit_code(err: &AirdpError) -> i32 {
    match err {
        AirdpError::Io(_) => EXIT_FAILURE,
        AirdpError::Trial { source, .. } => exit_code(source),
        _ => EXIT_CONFIG,
    }
}

/// Worker count from `AIRDP_THREADS`, if set to a positive integer.
pub fn thread_cap() -> Result<Option<usize>> {
    match std::env::var("AIRDP_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(0) | Err(_) => Err(AirdpError::Config(format!("AIRDP_THREADS must be a positive integer, got {v:?}"))),
            Ok(n) => Ok(Some(n)),
        },
        Err(_) => Ok(None),
    }
}

pub fn load_config(path: Option<&Path>, preset: Option<&str>, seed: Option<u64>) -> Result<ExperimentConfig> {
    if path.is_none() && preset.is_none() {
        return Err(AirdpError::Config("need --config, --preset or both".into()));
    }
    let user = match path {
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| AirdpError::Config(format!("cannot read config {}: {e}", p.display())))?;
            Some(serde_json::from_str(&text).map_err(|e| AirdpError::Config(format!("{}: {e}", p.display())))?)
        }
        None => None,
    };
    ExperimentConfig::resolve(preset, user, seed)
}

/// Runs a subcommand, inside a thread pool capped by `AIRDP_THREADS`.
pub fn execute(command: Command, cfg: &ExperimentConfig, with_traces: bool) -> Result<Report> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_cap()? {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| AirdpError::Config(format!("thread pool: {e}")))?;
    pool.install(|| match command {
        Command::PrivacySweep => experiments::privacy_sweep(cfg),
        Command::Compose => experiments::composition_sweep(cfg),
        Command::LocalDpTable => experiments::local_dp_table(cfg),
        Command::Bounds => experiments::bound_curves(cfg),
        Command::Train => experiments::train(cfg, with_traces),
    })
}

/// Writes a report: single tables go to `out` (or stdout); training output goes into
/// the directory `out` as `<name>.csv` (summary only on stdout).
pub fn write_report(report: &Report, cfg: &ExperimentConfig, out: Option<&Path>, directory: bool) -> Result<Vec<PathBuf>> {
    let json = cfg.to_json();
    match out {
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            if let Some((_, t)) = report.tables.first() {
                t.write_csv(&mut lock, &json)?;
            }
            lock.flush()?;
            Ok(Vec::new())
        }
        Some(path) if directory => {
            fs::create_dir_all(path)?;
            let mut written = Vec::new();
            for (name, t) in &report.tables {
                let file = path.join(format!("{name}.csv"));
                let mut w = std::io::BufWriter::new(fs::File::create(&file)?);
                t.write_csv(&mut w, &json)?;
                w.flush()?;
                written.push(file);
            }
            Ok(written)
        }
        Some(path) => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent)?;
            }
            let mut w = std::io::BufWriter::new(fs::File::create(path)?);
            if let Some((_, t)) = report.tables.first() {
                t.write_csv(&mut w, &json)?;
            }
            w.flush()?;
            Ok(vec![path.to_path_buf()])
        }
    }
}

/// Full CLI flow minus argument parsing; returns the process exit code.
pub fn run(command: Command, config: Option<&Path>, preset: Option<&str>, seed: Option<u64>, out: Option<&Path>) -> i32 {
    let result = load_config(config, preset, seed).and_then(|cfg| {
        let is_train = command == Command::Train;
        let report = execute(command, &cfg, is_train && out.is_some())?;
        write_report(&report, &cfg, out, is_train)?;
        Ok(report.infeasible_only)
    });
    match result {
        Ok(false) => EXIT_OK,
        Ok(true) => {
            log::warn!("every configuration in the sweep was infeasible");
            EXIT_INFEASIBLE
        }
        Err(e) => {
            eprintln!("airdp: {e}");
            exit_code(&e)
        }
    }
}
