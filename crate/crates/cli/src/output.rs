use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use fockfilter::Error;
use serde::Serialize;
use serde_json::Value;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug)]
pub enum CliError {
    /// Bad input: arguments, files, schema.
    Validation(String),
    /// A fit or reconstruction that did not converge.
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) | CliError::Numerical(m) => f.write_str(m),
        }
    }
}

pub fn is_numerical(e: &Error) -> bool {
    matches!(
        e,
        Error::FitNotConverged(_)
            | Error::MleNotConverged { .. }
            | Error::TooManySkippedTrials { .. }
            | Error::EmptyScan
            | Error::ZeroHeraldProbability
    )
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        if is_numerical(&e) {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Validation(e.to_string())
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Validation(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub schema_version: u32,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    pub params: Value,
}

impl RunManifest {
    pub fn new(subcommand: &str, seed: u64, output: Option<&Path>, params: Value) -> Self {
        Self {
            subcommand: subcommand.to_owned(),
            schema_version: SCHEMA_VERSION,
            seed,
            input: None,
            output: output.map(|p| p.display().to_string()),
            params,
        }
    }
}

pub fn read_file(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

fn write_to(path: Option<&Path>, text: &str) -> CliResult<()> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| CliError::Validation(format!("{}: {e}", p.display()))),
        None => {
            let mut out = io::stdout().lock();
            out.write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: Option<&Path>, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_to(path, &text)
}

/// `results.csv` gets its manifest at `results.csv.json`.
pub fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Writes CSV rows. The JSON `meta` goes next to the file, or to stderr when
/// the CSV goes to standard output.
pub fn write_csv<R: Serialize, M: Serialize>(path: Option<&Path>, rows: &[R], meta: &M) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Validation(e.to_string()))?;
    write_to(path, &String::from_utf8_lossy(&bytes))?;
    let mut meta_text = serde_json::to_string_pretty(meta)?;
    meta_text.push('\n');
    match path {
        Some(p) => write_to(Some(&sidecar(p)), &meta_text),
        None => {
            eprint!("{meta_text}");
            Ok(())
        }
    }
}
