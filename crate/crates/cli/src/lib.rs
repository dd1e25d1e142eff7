//! Driver behind the `infocam` binary. [`run`] is the whole program minus
//! process exit, so tests can call it in-process.

use std::ffi::OsString;
use std::fmt;
use std::io::Write;

use clap::Parser;

pub mod args;
mod commands;
pub mod config;

use args::{Cli, Command};

/// Failure of a command, carrying its exit code class.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Data(String),
    Numeric(String),
}

impl CliError {
    /// 2 configuration, 3 data, 4 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Numeric(m) => write!(f, "numeric failure: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<infocam::Error> for CliError {
    fn from(e: infocam::Error) -> Self {
        match e.kind() {
            infocam::ErrorKind::Config => CliError::Config(e.to_string()),
            infocam::ErrorKind::Data => CliError::Data(e.to_string()),
            infocam::ErrorKind::Numeric => CliError::Numeric(e.to_string()),
        }
    }
}

pub(crate) fn io_err(path: &std::path::Path, e: std::io::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

/// Parses `argv` (including the program name) and runs the subcommand,
/// writing human-readable output to `out`.
pub fn run<I, S>(argv: I, out: &mut dyn Write) -> Result<(), CliError>
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{e}");
                return Ok(());
            }
            return Err(CliError::Config(e.to_string()));
        }
    };
    let section = |name: &str| match &cli.config {
        Some(p) => config::load_section(p, name),
        None => Ok(Default::default()),
    };
    match &cli.command {
        Command::Synth(a) => commands::synth(config::merge(a, section("synth")?)?, out),
        Command::Train(a) => commands::train(config::merge(a, section("train")?)?, out),
        Command::Localize(a) => commands::localize(config::merge(a, section("localize")?)?, out),
        Command::Ablate(a) => commands::ablate(config::merge(a, section("ablate")?)?, out),
        Command::Gradcheck(a) => commands::gradcheck(config::merge(a, section("gradcheck")?)?, out),
        Command::ExportCheck(a) => commands::export_check(config::merge(a, section("export-check")?)?, out),
    }
}
