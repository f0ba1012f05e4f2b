//! Command-line front end: configuration resolution, run directories, and
//! the experiment commands.
//!
//! ```text
//! monox <command> [--config <file.toml>] [--section.key=value ...]
//! ```
//!
//! Exit codes: 0 success, 1 I/O or other failure, 2 configuration error,
//! 3 missing or unreadable artifact, 4 numeric failure (NaN/Inf).

mod commands;
mod config;
mod run_dir;

pub use commands::{execute, Command, Outcome};
pub use config::{
    resolve_config, ArchConfig, CorpusConfig, DataRouting, ExperimentConfig, LanguageConfig, ModelSection,
    OutputConfig, Preset, RunConfig, SeedConfig, SweepConfig, TaskChoice, DEFAULT_OUTPUT_ROOT, OUTPUT_ROOT_ENV,
};
pub use run_dir::{MethodMetrics, RunDir};

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::Parser;
use thiserror::Error;

use crate::evalx::EvalError;
use crate::model::{CheckpointError, ModelError};
use crate::pipelines::PipelineError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error at `{key}`: {msg}")]
    Config { key: String, msg: String },
    #[error("missing artifact {}: {msg}", path.display())]
    MissingArtifact { path: PathBuf, msg: String },
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("i/o error at {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn config(key: impl Into<String>, msg: impl Into<String>) -> Self {
        CliError::Config { key: key.into(), msg: msg.into() }
    }

    pub fn missing(path: &Path, msg: impl Into<String>) -> Self {
        CliError::MissingArtifact { path: path.to_path_buf(), msg: msg.into() }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            CliError::MissingArtifact { .. } => 3,
            CliError::Numeric(_) => 4,
            CliError::Io { .. } | CliError::Failed(_) => 1,
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        if e.is_numeric() {
            return CliError::Numeric(e.to_string());
        }
        match e {
            EvalError::Config(msg) => CliError::config("run", msg),
            EvalError::Pipeline(PipelineError::Config(msg)) => CliError::config("run", msg),
            other => CliError::Failed(other.to_string()),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        EvalError::from(e).into()
    }
}

/// A parsed command line.
#[derive(Clone, Debug, PartialEq)]
pub struct Invocation {
    pub command: Command,
    pub config_path: Option<PathBuf>,
    pub overrides: Vec<(String, String)>,
}

const AFTER_HELP: &str = "\
Overrides mirror config keys, e.g. --train.temperature=1.0 --seeds.count=3.
Run output goes to <output.root>/<output.name>; output.root defaults to
$MONOX_OUT, then ./runs.

Exit codes: 1 I/O failure, 2 config error, 3 missing artifact, 4 NaN/Inf.";

#[derive(Debug, Parser)]
#[command(
    name = "monox",
    about = "Teacher-to-student transfer experiments on synthetic multilingual corpora",
    after_help = AFTER_HELP
)]
struct Args {
    #[arg(value_enum)]
    command: Command,
    /// TOML run config; preset defaults apply to every key it omits.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Config overrides, applied after the file.
    #[arg(value_name = "--SECTION.KEY=VALUE", trailing_var_arg = true, allow_hyphen_values = true)]
    overrides: Vec<String>,
}

fn split_overrides(raw: &[String]) -> Result<Vec<(String, String)>, CliError> {
    raw.iter()
        .map(|arg| {
            let kv = arg
                .strip_prefix("--")
                .ok_or_else(|| CliError::config(arg.as_str(), "overrides take the form --section.key=value"))?;
            if kv == "config" || kv.starts_with("config=") {
                return Err(CliError::config("--config", "place --config before any overrides"));
            }
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| CliError::config(kv, "overrides take the form --section.key=value"))?;
            Ok((k.to_string(), v.to_string()))
        })
        .collect()
}

fn from_args(args: Args) -> Result<Invocation, CliError> {
    Ok(Invocation { command: args.command, config_path: args.config, overrides: split_overrides(&args.overrides)? })
}

/// Parses arguments after the program name.
pub fn parse_args(args: &[String]) -> Result<Invocation, CliError> {
    let parsed = Args::try_parse_from(std::iter::once("monox".to_string()).chain(args.iter().cloned()))
        .map_err(|e| CliError::config("command", e.to_string()))?;
    from_args(parsed)
}

/// Reads the config file (if any), resolves overrides, and fills in the
/// command.
pub fn load_config(inv: &Invocation) -> Result<RunConfig, CliError> {
    let text = match &inv.config_path {
        Some(p) => std::fs::read_to_string(p).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => CliError::missing(p, "config file not found"),
            _ => CliError::io(p, e),
        })?,
        None => String::new(),
    };
    let mut cfg = resolve_config(&text, &inv.overrides)?;
    cfg.command = inv.command.name().to_string();
    Ok(cfg)
}

/// Runs one command line and returns the process exit code.
pub fn main_with(args: &[String]) -> i32 {
    let parsed = match Args::try_parse_from(std::iter::once("monox".to_string()).chain(args.iter().cloned())) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let inv = match from_args(parsed) {
        Ok(inv) => inv,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    match load_config(&inv).and_then(|cfg| execute(&cfg)) {
        Ok(out) => {
            // A closed stdout (e.g. piped into `head`) is not a run failure.
            let mut stdout = std::io::stdout().lock();
            if !out.summary.is_empty() {
                let _ = writeln!(stdout, "{}", out.summary.trim_end());
            }
            let _ = writeln!(stdout, "run directory: {}", out.run_dir.display());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        CliError::Failed(e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        EvalError::from(e).into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn parses_command_config_and_overrides() {
        let inv = parse_args(&args(&["distill", "--config", "x.toml", "--train.temperature=1.0"])).unwrap();
        assert_eq!(inv.command, Command::Distill);
        assert_eq!(inv.config_path, Some(PathBuf::from("x.toml")));
        assert_eq!(inv.overrides, vec![("train.temperature".to_string(), "1.0".to_string())]);
        let inv = parse_args(&args(&["full-experiment", "--seeds.count=1", "--output.name=x"])).unwrap();
        assert_eq!(inv.command, Command::FullExperiment);
        assert_eq!(inv.overrides.len(), 2);
    }

    #[test]
    fn every_command_name_parses() {
        for c in Command::ALL {
            assert_eq!(parse_args(&args(&[c.name()])).unwrap().command, c);
        }
    }

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(parse_args(&args(&["bogus"])).unwrap_err().exit_code(), 2);
        assert_eq!(parse_args(&args(&[])).unwrap_err().exit_code(), 2);
        assert_eq!(parse_args(&args(&["report", "--train.lr"])).unwrap_err().exit_code(), 2);
        assert_eq!(parse_args(&args(&["report", "--a=1", "--config=x"])).unwrap_err().exit_code(), 2);
        assert_eq!(main_with(&args(&["bogus"])), 2);
        assert_eq!(main_with(&args(&["--help"])), 0);
    }

    #[test]
    fn missing_config_file_exits_three() {
        let inv = parse_args(&args(&["report", "--config=/nonexistent/monox.toml"])).unwrap();
        assert_eq!(load_config(&inv).unwrap_err().exit_code(), 3);
    }
}
