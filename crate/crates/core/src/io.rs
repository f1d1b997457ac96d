//! Persistence helpers shared by the modules: CSV with 17 significant
//! digits, JSON records, and raw little-endian `f64` arrays with a JSON
//! sidecar describing their shape.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Format a double with 17 significant digits (round-trips exactly).
pub fn fmt_f64(v: f64) -> String {
    if v == 0.0 {
        // keep the sign of negative zero out of reports
        return "0".into();
    }
    if !v.is_finite() {
        return if v.is_nan() {
            "nan".into()
        } else if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    format!("{v:.16e}")
}

/// Minimal RFC-4180 table: header row then numeric rows.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        CsvTable {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push_numbers(&mut self, row: &[f64]) {
        self.rows.push(row.iter().map(|v| fmt_f64(*v)).collect());
    }

    pub fn push_raw(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let quote = |s: &str| {
            if s.contains([',', '"', '\n']) {
                format!("\"{}\"", s.replace('"', "\"\""))
            } else {
                s.to_string()
            }
        };
        let mut out = String::new();
        for row in std::iter::once(&self.header).chain(&self.rows) {
            out += &row.iter().map(|c| quote(c)).collect::<Vec<_>>().join(",");
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.render())?;
        Ok(())
    }

    /// Parse a table written by [`CsvTable::render`] (no quoted fields).
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Io("empty CSV".into()))?
            .split(',')
            .map(String::from)
            .collect::<Vec<_>>();
        let rows = lines
            .filter(|l| !l.is_empty())
            .map(|l| l.split(',').map(String::from).collect::<Vec<_>>())
            .collect::<Vec<_>>();
        if rows.iter().any(|r| r.len() != header.len()) {
            return Err(Error::Io("ragged CSV row".into()));
        }
        Ok(CsvTable { header, rows })
    }

    pub fn column_f64(&self, name: &str) -> Result<Vec<f64>> {
        let k = self
            .header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Io(format!("missing CSV column '{name}'")))?;
        self.rows
            .iter()
            .map(|r| r[k].parse::<f64>().map_err(|e| Error::Io(format!("bad number '{}': {e}", r[k]))))
            .collect()
    }
}

/// Serialize as pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, to_json(value)?)?;
    Ok(())
}

/// Shape description stored next to a raw `f64` array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArraySidecar {
    pub dtype: String,
    pub byte_order: String,
    pub order: String,
    pub shape: Vec<usize>,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub meta: serde_json::Value,
}

/// Write `data` as little-endian f64 to `path` and its sidecar to
/// `path` + `.json`.
pub fn write_f64_array(path: &Path, data: &[f64], shape: &[usize], meta: serde_json::Value) -> Result<()> {
    if shape.iter().product::<usize>() != data.len() {
        return Err(Error::invalid("array shape does not match data length"));
    }
    let mut f = fs::File::create(path)?;
    let mut buf = Vec::with_capacity(data.len() * 8);
    for v in data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    f.write_all(&buf)?;
    let sidecar = ArraySidecar {
        dtype: "float64".into(),
        byte_order: "little".into(),
        order: "row-major".into(),
        shape: shape.to_vec(),
        meta,
    };
    let mut side = path.as_os_str().to_owned();
    side.push(".json");
    write_json(Path::new(&side), &sidecar)
}

pub fn read_f64_array(path: &Path) -> Result<(Vec<f64>, ArraySidecar)> {
    let mut side = path.as_os_str().to_owned();
    side.push(".json");
    let sidecar: ArraySidecar = serde_json::from_str(&fs::read_to_string(Path::new(&side))?)?;
    let bytes = fs::read(path)?;
    if bytes.len() % 8 != 0 || bytes.len() / 8 != sidecar.shape.iter().product::<usize>() {
        return Err(Error::Io("binary array length disagrees with sidecar shape".into()));
    }
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok((data, sidecar))
}
