//! File formats: CSV tables, JSON documents and content digests.

use std::fs;
use std::path::{Path, PathBuf};

use hetsar::estimator::DataTable;
use hetsar::weights::{WeightMatrix, WeightSpec};
use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

/// Most missing rows listed in an error message.
const MAX_LISTED_ROWS: usize = 20;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn read_bytes(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::input(format!("cannot read `{}`: {e}", path.display())))
}

fn is_missing(field: &str) -> bool {
    matches!(field, "" | "NA" | "na" | "NaN" | "nan" | "null" | "NULL" | ".")
}

/// Reads the named columns of a CSV file with a header row. Missing cells
/// are a hard error that lists the offending (1-based, data) rows; cells
/// that do not parse as numbers make the column non-numeric.
pub fn read_columns(path: &Path, columns: &[String]) -> CliResult<(DataTable<f64>, String)> {
    let bytes = read_bytes(path)?;
    let digest = sha256_hex(&bytes);
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(bytes.as_slice());
    let headers = reader.headers()?.clone();
    let mut index = Vec::with_capacity(columns.len());
    for name in columns {
        match headers.iter().position(|h| h == name) {
            Some(i) => index.push(i),
            None => {
                return Err(CliError::input(format!(
                    "column `{name}` not found in `{}` (header: {})",
                    path.display(),
                    headers.iter().collect::<Vec<_>>().join(", ")
                )))
            }
        }
    }
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); columns.len()];
    let mut missing: Vec<usize> = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let mut row_missing = false;
        for (k, &i) in index.iter().enumerate() {
            let field = record.get(i).unwrap_or("");
            if is_missing(field) {
                row_missing = true;
                values[k].push(f64::NAN);
                continue;
            }
            let v: f64 = field.parse().map_err(|_| {
                CliError::input(format!(
                    "column `{}` is not numeric: row {} holds `{field}`",
                    columns[k],
                    row + 1
                ))
            })?;
            if !v.is_finite() {
                return Err(CliError::input(format!(
                    "column `{}` has a non-finite value at row {}",
                    columns[k],
                    row + 1
                )));
            }
            values[k].push(v);
        }
        if row_missing {
            missing.push(row + 1);
        }
    }
    if !missing.is_empty() {
        let listed: Vec<String> = missing.iter().take(MAX_LISTED_ROWS).map(usize::to_string).collect();
        let more = if missing.len() > MAX_LISTED_ROWS {
            format!(" and {} more", missing.len() - MAX_LISTED_ROWS)
        } else {
            String::new()
        };
        return Err(CliError::input(format!(
            "missing values in {} row(s): {}{more}",
            missing.len(),
            listed.join(", ")
        )));
    }
    let mut table = DataTable::new();
    for (name, v) in columns.iter().zip(values) {
        table.insert(name.clone(), nalgebra::DVector::from_vec(v))?;
    }
    Ok((table, digest))
}

/// Parses a JSON document, returning it with the digest of its bytes.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<(T, String)> {
    let bytes = read_bytes(path)?;
    let value = serde_json::from_slice(&bytes)
        .map_err(|e| CliError::input(format!("invalid document `{}`: {e}", path.display())))?;
    Ok((value, sha256_hex(&bytes)))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    fs::write(path, bytes).map_err(|e| CliError::input(format!("cannot write `{}`: {e}", path.display())))
}

/// Writes a numeric table; `f64` display is the shortest round-trip form.
pub fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| CliError::input(format!("cannot write `{}`: {e}", path.display())))?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(f64::to_string))?;
    }
    w.flush()?;
    Ok(())
}

pub fn parent_dir(path: &Path) -> PathBuf {
    path.parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map_or_else(|| PathBuf::from("."), Path::to_path_buf)
}

pub struct LoadedWeights {
    pub matrix: WeightMatrix<f64>,
    pub digest: String,
}

/// Loads a weight-spec document; relative file references resolve against
/// the document's directory.
pub fn load_weights(path: &Path) -> CliResult<LoadedWeights> {
    let (spec, digest): (WeightSpec, String) = read_json(path)?;
    let matrix = spec.build(&parent_dir(path))?;
    Ok(LoadedWeights { matrix, digest })
}

/// Checks the major version of a document this tool wrote.
pub fn check_format_version(found: &str, supported_major: u32, what: &str) -> CliResult<()> {
    let major = found.split('.').next().and_then(|m| m.parse::<u32>().ok());
    if major == Some(supported_major) {
        Ok(())
    } else {
        Err(CliError::input(format!(
            "{what} has format version `{found}`; this tool reads major version {supported_major}"
        )))
    }
}

/// `x` to 4 significant digits for human-readable tables.
pub fn sig4(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let magnitude = x.abs().log10().floor() as i32;
    if !(-4..6).contains(&magnitude) {
        return format!("{x:.3e}");
    }
    let decimals = (3 - magnitude).max(0) as usize;
    format!("{x:.decimals$}")
}
