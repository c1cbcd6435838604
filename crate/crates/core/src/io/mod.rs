//! Files in and out: CSV series, JSON artifacts, run manifests, and the
//! command implementations behind the `spamnet` binary.

mod commands;
mod config;

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::series::TimeSeries;

pub use commands::{cmd_cluster, cmd_cv, cmd_experiment, cmd_fit, cmd_predict, cmd_rates, cmd_simulate, Invocation};
pub use config::{
    ClusterSection, ExperimentSection, KernelSection, LambdaMode, LambdaSection, MixingSection, PredictSection,
    RatesSection, RunConfig, SimulateSection, SolverSection,
};

/// Render a float so that parsing it back gives the same bits.
pub fn format_f64(v: f64) -> String {
    format!("{v}")
}

/// Read a CSV with a header row into names and a row-major matrix.
///
/// Errors name the offending line (1-based, counting the header) and column.
pub fn load_table(path: &Path) -> Result<(Vec<String>, DMatrix<f64>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let names: Vec<String> = reader
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    if names.is_empty() || names.iter().all(String::is_empty) {
        return Err(Error::Data(format!("{}: missing header row", path.display())));
    }
    let mut values = Vec::new();
    let mut rows = 0;
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| csv_error(path, e))?;
        if record.len() != names.len() {
            return Err(Error::Data(format!(
                "{}: line {line} has {} fields, expected {}",
                path.display(),
                record.len(),
                names.len()
            )));
        }
        for (c, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| {
                Error::Data(format!(
                    "{}: line {line}, column {} (`{}`): `{cell}` is not a number",
                    path.display(),
                    c + 1,
                    names[c]
                ))
            })?;
            if !v.is_finite() {
                return Err(Error::Data(format!(
                    "{}: line {line}, column {} (`{}`): value {cell} is not finite",
                    path.display(),
                    c + 1,
                    names[c]
                )));
            }
            values.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::Data(format!("{}: no data rows", path.display())));
    }
    Ok((names.clone(), DMatrix::from_row_slice(rows, names.len(), &values)))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    if let csv::ErrorKind::UnequalLengths { pos, expected_len, len } = e.kind() {
        let line = pos.as_ref().map_or(0, |p| p.line());
        return Error::Data(format!(
            "{}: line {line} has {len} fields, expected {expected_len}",
            path.display()
        ));
    }
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Data(format!("{}: {other:?}", path.display())),
    }
}

/// Load a time series: header of column names, one row per time point.
pub fn load_csv(path: &Path) -> Result<TimeSeries> {
    let (names, values) = load_table(path)?;
    TimeSeries::new(values, names)
}

/// Write a series in the format read by [`load_csv`].
pub fn save_csv(series: &TimeSeries, path: &Path) -> Result<()> {
    let rows: Vec<Vec<String>> = (0..series.n_rows())
        .map(|t| series.row(t).into_iter().map(format_f64).collect())
        .collect();
    write_csv(path, series.column_names(), &rows)
}

pub(crate) fn write_csv<S: AsRef<str>>(path: &Path, header: &[S], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(header.iter().map(AsRef::as_ref)).map_err(|e| csv_error(path, e))?;
    for row in rows {
        w.write_record(row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Numerical(format!("cannot serialize {}: {e}", path.display())))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub(crate) fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// Provenance record written next to every command's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct Manifest {
    pub command: String,
    pub package: String,
    pub version: String,
    pub config_path: String,
    pub config_sha256: String,
    pub seed: u64,
    /// `(role, path, sha256)` of each input file.
    pub inputs: Vec<(String, String, String)>,
    /// `(file name, sha256)` of each output, in write order.
    pub outputs: Vec<(String, String)>,
}

pub(crate) struct OutputDir {
    root: PathBuf,
    written: Vec<String>,
}

impl OutputDir {
    pub(crate) fn create(root: PathBuf) -> Result<Self> {
        fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        Ok(Self { root, written: Vec::new() })
    }

    /// Path for a new output file, recorded for the manifest.
    pub(crate) fn file(&mut self, name: &str) -> PathBuf {
        self.written.push(name.to_string());
        self.root.join(name)
    }

    pub(crate) fn finish(self, mut manifest: Manifest) -> Result<PathBuf> {
        for name in &self.written {
            manifest.outputs.push((name.clone(), sha256_file(&self.root.join(name))?));
        }
        let path = self.root.join("manifest.json");
        write_json(&path, &manifest)?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn float_text_round_trips() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 1e300, 123456789.12345679] {
            assert_eq!(format_f64(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
    }
}
