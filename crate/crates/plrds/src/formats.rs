//! Field dumps and tabular reports.
//!
//! Floats are written with 17 significant digits so that every value reads
//! back bit for bit. Binary field dumps are `u32 dim, u32 n, f64 L` followed
//! by the node values, all little-endian.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use plrds_core::{Field, Grid};
use serde_json::{json, Map, Value};

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: {message}")]
    Malformed { path: String, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> FormatError + '_ {
    move |source| FormatError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> FormatError + '_ {
    move |source| FormatError::Csv {
        path: path.display().to_string(),
        source,
    }
}

fn malformed(path: &Path, message: impl Into<String>) -> FormatError {
    FormatError::Malformed {
        path: path.display().to_string(),
        message: message.into(),
    }
}

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// One report cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    F(f64),
    U(u64),
    B(bool),
    S(String),
}

impl Cell {
    fn text(&self) -> String {
        match self {
            Cell::F(x) => fmt_f64(*x),
            Cell::U(x) => x.to_string(),
            Cell::B(x) => x.to_string(),
            Cell::S(x) => x.clone(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::F(x) if x.is_finite() => json!(x),
            Cell::F(x) => json!(x.to_string()),
            Cell::U(x) => json!(x),
            Cell::B(x) => json!(x),
            Cell::S(x) => json!(x),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::F(x)
    }
}

impl From<u64> for Cell {
    fn from(x: u64) -> Self {
        Cell::U(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::U(x as u64)
    }
}

impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::B(x)
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::S(x.to_string())
    }
}

/// A named table with a fixed header.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, header: &[&'static str]) -> Self {
        Self {
            name: name.to_string(),
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.header.len(), "row width of table {}", self.name);
        self.rows.push(row);
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), FormatError> {
        let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
        w.write_record(&self.header).map_err(csv_err(path))?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::text)).map_err(csv_err(path))?;
        }
        w.flush().map_err(io_err(path))
    }

    pub fn to_json(&self) -> Value {
        Value::Array(
            self.rows
                .iter()
                .map(|row| {
                    let m: Map<String, Value> = self
                        .header
                        .iter()
                        .zip(row)
                        .map(|(h, c)| (h.to_string(), c.json()))
                        .collect();
                    Value::Object(m)
                })
                .collect(),
        )
    }
}

pub fn write_json(path: &Path, value: &Value) -> Result<(), FormatError> {
    let mut text = serde_json::to_string_pretty(value).expect("json values serialize");
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

/// Writes a field as CSV with columns `x, value` or `x, y, value`.
pub fn write_field_csv(path: &Path, field: &Field) -> Result<(), FormatError> {
    let g = field.grid();
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    if g.dim() == 1 {
        w.write_record(["x", "value"]).map_err(csv_err(path))?;
    } else {
        w.write_record(["x", "y", "value"]).map_err(csv_err(path))?;
    }
    for (i, v) in field.values().iter().enumerate() {
        let c = g.coords(i);
        let mut rec = vec![fmt_f64(c[0])];
        if g.dim() == 2 {
            rec.push(fmt_f64(c[1]));
        }
        rec.push(fmt_f64(*v));
        w.write_record(&rec).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Reads a field written by [`write_field_csv`]; the grid is recovered from
/// the coordinates.
pub fn read_field_csv(path: &Path) -> Result<Field, FormatError> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let dim = match r.headers().map_err(csv_err(path))?.len() {
        2 => 1,
        3 => 2,
        k => return Err(malformed(path, format!("expected 2 or 3 columns, found {k}"))),
    };
    let mut coords = Vec::new();
    let mut values = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err(path))?;
        let nums: Result<Vec<f64>, _> = rec.iter().map(|s| s.trim().parse::<f64>()).collect();
        let nums = nums.map_err(|e| malformed(path, format!("row {}: {e}", i + 2)))?;
        coords.push([nums[0], if dim == 2 { nums[1] } else { 0.0 }]);
        values.push(nums[dim]);
    }
    let n = match dim {
        1 => values.len(),
        _ => {
            let n = (values.len() as f64).sqrt().round() as usize;
            if n * n != values.len() {
                return Err(malformed(path, "row count is not a square"));
            }
            n
        }
    };
    let half_width = coords.iter().map(|c| -c[0]).fold(f64::NEG_INFINITY, f64::max);
    let grid = Grid::new(dim, half_width, n).map_err(|e| malformed(path, e.to_string()))?;
    let tol = 1e-12 * half_width;
    for (i, c) in coords.iter().enumerate() {
        let want = grid.coords(i);
        if (c[0] - want[0]).abs() > tol || (dim == 2 && (c[1] - want[1]).abs() > tol) {
            return Err(malformed(
                path,
                format!("row {}: coordinates do not lie on a uniform grid", i + 2),
            ));
        }
    }
    Field::from_values(grid, values).map_err(|e| malformed(path, e.to_string()))
}

pub fn write_field_binary(path: &Path, field: &Field) -> Result<(), FormatError> {
    let g = field.grid();
    let mut buf = Vec::with_capacity(16 + 8 * g.len());
    buf.extend_from_slice(&(g.dim() as u32).to_le_bytes());
    buf.extend_from_slice(&(g.n_per_axis() as u32).to_le_bytes());
    buf.extend_from_slice(&g.half_width().to_le_bytes());
    for v in field.values() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut f = fs::File::create(path).map_err(io_err(path))?;
    f.write_all(&buf).map_err(io_err(path))
}

pub fn read_field_binary(path: &Path) -> Result<Field, FormatError> {
    let mut buf = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(io_err(path))?;
    if buf.len() < 16 {
        return Err(malformed(path, "truncated header"));
    }
    let u32_at = |i: usize| u32::from_le_bytes(buf[i..i + 4].try_into().unwrap()) as usize;
    let f64_at = |i: usize| f64::from_le_bytes(buf[i..i + 8].try_into().unwrap());
    let grid = Grid::new(u32_at(0), f64_at(8), u32_at(4)).map_err(|e| malformed(path, e.to_string()))?;
    if buf.len() != 16 + 8 * grid.len() {
        return Err(malformed(
            path,
            format!("expected {} values, found {} bytes of data", grid.len(), buf.len() - 16),
        ));
    }
    let values = (0..grid.len()).map(|i| f64_at(16 + 8 * i)).collect();
    Field::from_values(grid, values).map_err(|e| malformed(path, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE] {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits(), "{s}");
        }
    }

    #[test]
    fn table_json_uses_header_keys() {
        let mut t = Table::new("t", &["a", "b"]);
        t.push(vec![1.5.into(), true.into()]);
        assert_eq!(t.to_json(), json!([{"a": 1.5, "b": true}]));
    }
}
