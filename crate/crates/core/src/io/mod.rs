//! File formats: text trajectories, binary fields, PGM label masks and CSV
//! reports. Every writer goes through [`atomic_write`].

mod kvaf;
mod pgm;
mod trajectory;

pub use kvaf::{decode_field, encode_field, read_field, write_field, KVAF_MAGIC, KVAF_VERSION};
pub use pgm::{decode_pgm, encode_pgm, read_mask, write_mask};
pub use trajectory::{format_trajectory, parse_trajectory, read_trajectory, write_trajectory, DatasetRecord};

use std::fs;
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::{Error, Result};

#[derive(Debug, Error, PartialEq)]
pub enum FormatError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invariant violated: {0}")]
    InvariantViolation(String),
    #[error("bad magic bytes")]
    BadMagic,
    #[error("unsupported version {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("file truncated: need {expected} bytes, found {found}")]
    TruncatedFile { expected: usize, found: usize },
    #[error("csv: {0}")]
    Csv(String),
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `bytes` to a sibling temporary file and renames it over `path`.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.tmp{}", std::process::id()));
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

/// Serializes rows to CSV bytes with a header row taken from the field names.
pub fn csv_bytes<S: Serialize>(rows: &[S]) -> Result<Vec<u8>, FormatError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| FormatError::Csv(e.to_string()))?;
    }
    w.into_inner().map_err(|e| FormatError::Csv(e.to_string()))
}

pub fn write_csv<S: Serialize>(path: &Path, rows: &[S]) -> Result<()> {
    atomic_write(path, &csv_bytes(rows)?)
}

/// CSV bytes from an explicit header and pre-formatted cells.
pub fn table_bytes(header: &[&str], rows: &[Vec<String>]) -> Result<Vec<u8>, FormatError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| FormatError::Csv(e.to_string());
    w.write_record(header).map_err(err)?;
    for r in rows {
        if r.len() != header.len() {
            return Err(FormatError::Csv(format!(
                "row has {} cells, header has {}",
                r.len(),
                header.len()
            )));
        }
        w.write_record(r).map_err(err)?;
    }
    w.into_inner().map_err(|e| FormatError::Csv(e.to_string()))
}

pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    atomic_write(path, &table_bytes(header, rows)?)
}

/// Header and rows of a CSV file, all cells as strings.
pub fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let mut r = csv::Reader::from_reader(bytes.as_slice());
    let err = |e: csv::Error| FormatError::Csv(format!("{}: {e}", path.display()));
    let header = r.headers().map_err(err)?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(rec.map_err(err)?.iter().map(String::from).collect());
    }
    Ok((header, rows))
}
