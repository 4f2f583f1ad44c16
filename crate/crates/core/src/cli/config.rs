//! `key=value` configuration files layered on top of the command line.

use std::ffi::OsString;
use std::path::Path;

use crate::error::{Error, Result};

/// Parses `key=value` lines. Blank lines and lines starting with `#` are
/// skipped; keys may use `_` or `-`.
pub fn parse_config(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::InvalidInput(format!("config line {}: expected key=value, got '{line}'", no + 1))
        })?;
        let key = key.trim().trim_start_matches('-').replace('_', "-");
        if key.is_empty() {
            return Err(Error::InvalidInput(format!("config line {}: empty key", no + 1)));
        }
        if key == "config" {
            return Err(Error::InvalidInput(format!("config line {}: config files cannot nest", no + 1)));
        }
        out.push((key, value.trim().to_string()));
    }
    Ok(out)
}

pub fn read_config(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}

/// Appends the entries as long flags so that they win over earlier flags.
/// `key=true` becomes a bare switch and `key=false` is dropped.
pub fn overlay(argv: &[OsString], entries: &[(String, String)]) -> Vec<OsString> {
    let mut out = argv.to_vec();
    for (key, value) in entries {
        match value.as_str() {
            "true" => out.push(format!("--{key}").into()),
            "false" => {}
            _ => {
                out.push(format!("--{key}").into());
                out.push(value.into());
            }
        }
    }
    out
}
