//! Text formats.
//!
//! Observations: a `# rows=R cols=C` comment line, then the header `i,j,value`
//! and one 0-based sample per line. Dense matrices: one CSV line per row.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::matrix::{DenseMatrix, ObservationSet, Sample};

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

pub fn observations_to_csv(obs: &ObservationSet) -> String {
    let mut out = String::with_capacity(24 * obs.len() + 32);
    let _ = writeln!(out, "# rows={} cols={}", obs.rows(), obs.cols());
    out.push_str("i,j,value\n");
    for s in obs.iter() {
        let _ = writeln!(out, "{},{},{:?}", s.row, s.col, s.value);
    }
    out
}

fn parse_dims(line: &str, lineno: usize) -> Result<(usize, usize)> {
    let body = line.trim_start_matches('#').trim();
    let (mut rows, mut cols) = (None, None);
    for part in body.split_whitespace() {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| parse_err(lineno, format!("expected key=value, got '{part}'")))?;
        let v: usize = value
            .parse()
            .map_err(|_| parse_err(lineno, format!("'{value}' is not a dimension")))?;
        match key {
            "rows" => rows = Some(v),
            "cols" => cols = Some(v),
            _ => return Err(parse_err(lineno, format!("unknown header key '{key}'"))),
        }
    }
    match (rows, cols) {
        (Some(r), Some(c)) if r > 0 && c > 0 => Ok((r, c)),
        _ => Err(parse_err(lineno, "header must give positive rows= and cols=")),
    }
}

pub fn observations_from_csv(text: &str) -> Result<ObservationSet> {
    let mut dims = None;
    let mut header_seen = false;
    let mut samples = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let lineno = k + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('#') {
            if dims.is_none() && line.contains("rows=") {
                dims = Some(parse_dims(line, lineno)?);
            }
            continue;
        }
        if !header_seen {
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols != ["i", "j", "value"] {
                return Err(parse_err(lineno, format!("expected header 'i,j,value', got '{line}'")));
            }
            header_seen = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(parse_err(lineno, format!("expected 3 fields, got {}", fields.len())));
        }
        let row = fields[0]
            .parse()
            .map_err(|_| parse_err(lineno, format!("bad row index '{}'", fields[0])))?;
        let col = fields[1]
            .parse()
            .map_err(|_| parse_err(lineno, format!("bad column index '{}'", fields[1])))?;
        let value: f64 = fields[2]
            .parse()
            .map_err(|_| parse_err(lineno, format!("bad value '{}'", fields[2])))?;
        samples.push(Sample { row, col, value });
    }
    let (rows, cols) = dims.ok_or_else(|| parse_err(1, "missing '# rows=R cols=C' header line"))?;
    if !header_seen {
        return Err(parse_err(1, "missing 'i,j,value' header"));
    }
    ObservationSet::new(rows, cols, samples)
}

pub fn dense_to_csv(m: &DenseMatrix) -> String {
    let mut out = String::with_capacity(m.rows() * m.cols() * 20);
    for i in 0..m.rows() {
        for j in 0..m.cols() {
            if j > 0 {
                out.push(',');
            }
            let _ = write!(out, "{:?}", m.get(i, j));
        }
        out.push('\n');
    }
    out
}

pub fn dense_from_csv(text: &str) -> Result<DenseMatrix> {
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (k, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let vals = line
            .split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|_| parse_err(k + 1, format!("bad value '{v}'"))))
            .collect::<Result<Vec<_>>>()?;
        match cols {
            None => cols = Some(vals.len()),
            Some(c) if c != vals.len() => {
                return Err(parse_err(k + 1, format!("expected {c} columns, got {}", vals.len())));
            }
            _ => {}
        }
        data.extend(vals);
        rows += 1;
    }
    let cols = cols.ok_or_else(|| parse_err(1, "empty matrix"))?;
    DenseMatrix::from_row_major(rows, cols, &data)
}

pub fn read_observations(path: &Path) -> Result<ObservationSet> {
    observations_from_csv(&std::fs::read_to_string(path)?)
}

pub fn write_observations(path: &Path, obs: &ObservationSet) -> Result<()> {
    Ok(std::fs::write(path, observations_to_csv(obs))?)
}

pub fn read_dense(path: &Path) -> Result<DenseMatrix> {
    dense_from_csv(&std::fs::read_to_string(path)?)
}

pub fn write_dense(path: &Path, m: &DenseMatrix) -> Result<()> {
    Ok(std::fs::write(path, dense_to_csv(m))?)
}
