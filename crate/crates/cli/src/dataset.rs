//! Sample CSV files: header `yx,yy,yz`, one measurement per row, Gauss.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use magcal::simulator::Dataset;
use nalgebra::Vector3;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const COLUMNS: [&str; 3] = ["yx", "yy", "yz"];

pub struct LoadedSamples {
    pub samples: Vec<Vector3<f64>>,
    /// Hex SHA-256 of the raw file bytes.
    pub digest: String,
}

pub fn read_samples(path: &Path) -> CliResult<LoadedSamples> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    let digest = hex::encode(Sha256::digest(&bytes));
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(bytes.as_slice());
    let headers = reader.headers().map_err(|e| CliError::io(path, e))?.clone();
    let mut index = [0usize; 3];
    for (slot, name) in index.iter_mut().zip(COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Input(format!("{}: missing column `{name}`", path.display())))?;
    }
    let extra: Vec<&str> = headers.iter().filter(|h| !COLUMNS.contains(h)).collect();
    if !extra.is_empty() {
        log::warn!("{}: ignoring extra columns {}", path.display(), extra.join(", "));
    }

    let mut samples = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::io(path, e))?;
        let mut v = Vector3::zeros();
        for (k, &col) in index.iter().enumerate() {
            let field = record.get(col).unwrap_or("");
            v[k] = field.parse::<f64>().map_err(|_| {
                CliError::Input(format!(
                    "{}: row {}: `{field}` is not a number",
                    path.display(),
                    row + 2
                ))
            })?;
            if !v[k].is_finite() {
                return Err(CliError::Input(format!(
                    "{}: row {}: non-finite value",
                    path.display(),
                    row + 2
                )));
            }
        }
        samples.push(v);
    }
    Ok(LoadedSamples { samples, digest })
}

pub fn to_dataset(samples: Vec<Vector3<f64>>) -> CliResult<Dataset<f64>> {
    Ok(Dataset::from_samples(samples)?)
}

/// Writes rows with shortest round-trip float formatting.
pub fn write_rows<const N: usize>(path: &Path, header: [&str; N], rows: impl IntoIterator<Item = [f64; N]>) -> CliResult<()> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(header).map_err(|e| CliError::io(path, e))?;
    for row in rows {
        w.write_record(row.iter().map(|v| v.to_string()))
            .map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_samples(path: &Path, samples: &[Vector3<f64>]) -> CliResult<()> {
    write_rows(path, COLUMNS, samples.iter().map(|v| [v.x, v.y, v.z]))
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut file = File::create(path).map_err(|e| CliError::io(path, e))?;
    serde_json::to_writer_pretty(&mut file, value).map_err(|e| CliError::io(path, e))?;
    file.write_all(b"\n").map_err(|e| CliError::io(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::io(path, e))
}
