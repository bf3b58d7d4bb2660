//! Command-line front end for the rate-relevance toolkit.
//!
//! Reads a flat experiment config, dispatches to `ibregion-core` and
//! writes a deterministic CSV report.

pub mod commands;
pub mod config;
pub mod report;

use std::fmt;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub use commands::run_command;
pub use config::{parse_config, ConfigIssue, ExperimentConfig};
pub use report::{emit_csv, CsvReport};

/// Subcommands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Curve,
    Region,
    Refinability,
    Counterexample,
    Simulate,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Command::Curve => "curve",
            Command::Region => "region",
            Command::Refinability => "refinability",
            Command::Counterexample => "counterexample",
            Command::Simulate => "simulate",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid config:\n{}", render_issues(.0))]
    Config(Vec<ConfigIssue>),

    #[error(transparent)]
    Core(#[from] ibregion_core::Error),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

fn render_issues(issues: &[ConfigIssue]) -> String {
    issues.iter().map(|i| format!("  {i}")).collect::<Vec<_>>().join("\n")
}

impl CliError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        use ibregion_core::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) => match e {
                E::Usage(_) | E::InvalidDistribution(_) | E::Domain { .. } => 2,
                E::Infeasible(_) | E::NotOrderable(_) | E::InconsistentTargets(_) | E::Degenerate(_) => 3,
                E::Budget(_) => 4,
            },
            CliError::Io { .. } => 5,
        }
    }

    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io {
            context: context.into(),
            source,
        }
    }
}

/// Reads the config, runs `command` and writes the report. `output` and
/// `seed` override the config's `output` and `seed` keys.
pub fn run(command: Command, config_path: &Path, output: Option<PathBuf>, seed: Option<u64>) -> Result<(), CliError> {
    let text = std::fs::read_to_string(config_path)
        .map_err(|e| CliError::io(format!("reading {}", config_path.display()), e))?;
    let base = config_path.parent().unwrap_or(Path::new("."));
    let mut cfg = parse_config(&text, command, base).map_err(CliError::Config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if output.is_some() {
        cfg.output = output;
    }
    let report = run_command(&cfg)?;
    let path = cfg.output.as_deref();
    emit_csv(&report, path).map_err(|e| {
        let target = path.map_or("stdout".to_string(), |p| p.display().to_string());
        CliError::io(format!("writing {target}"), e)
    })
}
