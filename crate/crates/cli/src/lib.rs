//! Command-line front end for the `dpmbq` crate.
//!
//! Each subcommand is a function from parsed arguments to an [`Output`]: the
//! result body plus an optional sidecar. Nothing is written until the whole
//! result exists, so a failing run leaves no partial files behind.

pub mod commands;
pub mod input;

use std::path::{Path, PathBuf};

pub use commands::{Cli, Command};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: u64,
        column: u64,
        message: String,
    },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("cannot read input: {0}")]
    Io(String),
    #[error("cannot write output: {0}")]
    Write(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numerical(_) => 3,
            _ => 2,
        }
    }
}

impl From<dpmbq::Error> for CliError {
    fn from(e: dpmbq::Error) -> Self {
        match e {
            dpmbq::Error::InvalidInput(m) => CliError::Invalid(m),
            dpmbq::Error::NumericalFailure(m) => CliError::Numerical(m),
        }
    }
}

/// A finished command result.
#[derive(Debug, Clone, PartialEq)]
pub struct Output {
    /// Written to `--out`, or stdout when absent.
    pub body: String,
    /// Written next to `--out` as `<out>.meta.json`; printed to stdout when
    /// `--out` is absent and the body went there too.
    pub sidecar: Option<String>,
    pub out: Option<PathBuf>,
}

pub fn sidecar_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

impl Output {
    pub fn emit(&self) -> Result<(), CliError> {
        match &self.out {
            Some(path) => {
                write_file(path, &self.body)?;
                if let Some(side) = &self.sidecar {
                    write_file(&sidecar_path(path), side)?;
                    print!("{side}");
                }
            }
            None => {
                print!("{}", self.body);
                if let Some(side) = &self.sidecar {
                    print!("{side}");
                }
            }
        }
        Ok(())
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Write(format!("{}: {e}", path.display())))
}

/// Applies `DPMBQ_THREADS` to the global rayon pool.
pub fn configure_threads(value: Option<&str>) -> Result<(), CliError> {
    let Some(raw) = value else { return Ok(()) };
    let threads: usize = raw.trim().parse().ok().filter(|t| *t > 0).ok_or_else(|| {
        CliError::Invalid(format!(
            "DPMBQ_THREADS must be a positive integer, got {raw:?}"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Invalid(format!("cannot configure thread pool: {e}")))
}
