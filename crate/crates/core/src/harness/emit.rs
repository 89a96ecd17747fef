use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::RunMetrics;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "WCHAIN_OUT_DIR";

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    JsonLines,
}

impl FromStr for Format {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Format::Csv),
            "json-lines" | "jsonl" => Ok(Format::JsonLines),
            other => Err(format!("unknown format `{other}` (csv or json-lines)")),
        }
    }
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::JsonLines => "jsonl",
        }
    }
}

#[derive(Debug, Error)]
pub enum EmitError {
    #[error("writing {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("writing {path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("writing {path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
}

/// One emitted row. Column order is the field order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub label: String,
    pub n: usize,
    pub distribution: String,
    pub alpha: f64,
    pub beta: f64,
    pub mean_gamma: f64,
    pub seeds: usize,
    pub epochs: usize,
    pub committed_epochs: usize,
    pub abandoned_epochs: usize,
    pub committed_txs: u64,
    pub total_slots: u64,
    pub mean_epoch_slots: f64,
    pub tps: f64,
}

/// `x` rounded to 6 significant digits.
pub fn round_sig(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.5e}").parse().expect("formatted float parses")
}

pub fn default_output_dir() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."))
}

/// Writes one row per metrics entry, in order.
pub fn emit(metrics: &[RunMetrics], path: &Path, format: Format) -> Result<(), EmitError> {
    let io = |source| EmitError::Io { path: path.into(), source };
    let file = File::create(path).map_err(io)?;
    let mut out = BufWriter::new(file);
    match format {
        Format::Csv => {
            let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(&mut out);
            let csv_err = |source| EmitError::Csv { path: path.into(), source };
            w.write_record(HEADER).map_err(csv_err)?;
            for m in metrics {
                w.serialize(m.row()).map_err(csv_err)?;
            }
            w.flush().map_err(io)?;
        }
        Format::JsonLines => {
            for m in metrics {
                serde_json::to_writer(&mut out, &m.row()).map_err(|source| EmitError::Json { path: path.into(), source })?;
                out.write_all(b"\n").map_err(io)?;
            }
        }
    }
    out.flush().map_err(io)
}

const HEADER: [&str; 14] = [
    "label",
    "n",
    "distribution",
    "alpha",
    "beta",
    "mean_gamma",
    "seeds",
    "epochs",
    "committed_epochs",
    "abandoned_epochs",
    "committed_txs",
    "total_slots",
    "mean_epoch_slots",
    "tps",
];

/// Parses a file written by [`emit`] in CSV format.
pub fn read_csv(path: &Path) -> Result<Vec<MetricsRow>, csv::Error> {
    csv::Reader::from_path(path)?.deserialize().collect()
}
