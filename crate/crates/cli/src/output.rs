//! File emission helpers: CSV with 17 significant digits, pretty JSON.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::CliError;

/// Reals in CSV cells: scientific notation, 17 significant digits.
pub fn real(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.display().to_string(),
        source,
    })
}

pub fn write_text(path: &Path, text: &str) -> Result<PathBuf, CliError> {
    fs::write(path, text).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(path.to_path_buf())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<PathBuf, CliError> {
    let mut s = serde_json::to_string_pretty(value).expect("output serializes");
    s.push('\n');
    write_text(path, &s)
}

/// Writes a header and rows through the csv crate (RFC 4180 quoting, `\n`
/// terminators).
pub fn write_csv(
    path: &Path,
    header: &[String],
    rows: &[Vec<String>],
) -> Result<PathBuf, CliError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush().map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(path.to_path_buf())
}
