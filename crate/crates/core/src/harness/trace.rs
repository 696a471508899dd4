//! Column-oriented run record and its CSV form.
//!
//! Values are written with Rust's shortest round-trip float formatting, so
//! reading a trace back reproduces every value bit for bit.

use std::io::{Read, Write};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::WHEEL_NAMES;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("row {row}: cannot parse `{value}` as a number")]
    Number { row: usize, value: String },
    #[error("row {row} has {got} fields, expected {expected}")]
    Width { row: usize, got: usize, expected: usize },
}

/// Vehicle-level columns, in order.
pub const CP_COLUMNS: [&str; 15] = [
    "t", "vx", "vy", "yaw_rate", "yaw_rate_ref", "v_ref", "a_ref", "beta", "ax", "x", "y", "psi",
    "steer", "arbitration", "launch",
];

/// Per-wheel columns, suffixed with the wheel name.
pub const WHEEL_COLUMNS: [&str; 12] = [
    "ax_w", "ax_ref", "tau", "tau_ref", "lambda", "lambda_ref", "eps", "mu", "fz", "fx", "omega", "a_lat",
];

pub fn standard_columns() -> Vec<String> {
    let mut cols: Vec<String> = CP_COLUMNS.iter().map(|s| s.to_string()).collect();
    for w in WHEEL_NAMES {
        for c in WHEEL_COLUMNS {
            cols.push(format!("{c}_{w}"));
        }
    }
    cols
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Trace {
    pub fn new(columns: Vec<String>) -> Self {
        Trace { columns, rows: Vec::new() }
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Column values; panics on an unknown name.
    pub fn column(&self, name: &str) -> Vec<f64> {
        let k = self.index(name).unwrap_or_else(|| panic!("no trace column `{name}`"));
        self.rows.iter().map(|r| r[k]).collect()
    }

    pub fn wheel_column(&self, name: &str, wheel: usize) -> Vec<f64> {
        self.column(&format!("{name}_{}", WHEEL_NAMES[wheel]))
    }

    pub fn times(&self) -> Vec<f64> {
        self.column("t")
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), TraceError> {
        let mut wr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
        wr.write_record(&self.columns)?;
        for row in &self.rows {
            wr.write_record(row.iter().map(|v| v.to_string()))?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn to_csv_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory cannot fail");
        buf
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self, TraceError> {
        let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
        let columns: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for (k, rec) in rd.records().enumerate() {
            let rec = rec?;
            if rec.len() != columns.len() {
                return Err(TraceError::Width { row: k, got: rec.len(), expected: columns.len() });
            }
            let row = rec
                .iter()
                .map(|s| s.parse::<f64>().map_err(|_| TraceError::Number { row: k, value: s.into() }))
                .collect::<Result<Vec<_>, _>>()?;
            rows.push(row);
        }
        Ok(Trace { columns, rows })
    }

    pub fn write_file(&self, path: &std::path::Path) -> Result<(), TraceError> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    pub fn read_file(path: &std::path::Path) -> Result<Self, TraceError> {
        Trace::read_csv(std::io::BufReader::new(std::fs::File::open(path)?))
    }

    /// Hex SHA-256 of the CSV encoding.
    pub fn sha256_hex(&self) -> String {
        let digest = Sha256::digest(self.to_csv_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
