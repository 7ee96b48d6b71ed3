//! Command implementations behind the `latentprobe` binary.
//!
//! Each command returns an [`Outcome`] holding its exit code and the text it
//! prints; the binary only parses arguments and writes the text out.

pub mod arith;
pub mod checks;
pub mod eval;
pub mod manifest;
pub mod props;
pub mod search;

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

/// Exit code for a run that did what was asked.
pub const EXIT_OK: u8 = 0;
/// Exit code for an error of any kind.
pub const EXIT_ERROR: u8 = 1;
/// Exit code for a run that finished but fell short: a search stopped by its
/// round cap, or a property probe above tolerance.
pub const EXIT_SHORTFALL: u8 = 2;

/// Flags shared by every subcommand.
#[derive(Clone, Debug, Default)]
pub struct Common {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub json: bool,
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Outcome {
    pub code: u8,
    pub stdout: String,
}

impl Outcome {
    pub fn new(code: u8, stdout: impl Into<String>) -> Self {
        Self {
            code,
            stdout: stdout.into(),
        }
    }
}

/// Pretty JSON with a trailing newline.
pub(crate) fn json_text<S: Serialize>(value: &S) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).context("json: serialising output")?;
    s.push('\n');
    Ok(s)
}

pub(crate) fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("io: cannot write {}", path.display()))
}

pub(crate) fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("io: cannot create {}", dir.display()))
}
