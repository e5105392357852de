//! CSV ingestion and emission: comma separator, '.' decimal, header row on
//! output, newline-terminated rows.

use std::fs;
use std::path::Path;

use polya_forest::aggregate::GridDensity;
use polya_forest::error::{Error, Result};
use polya_forest::posterior::Dataset;

/// One observation per line, optional single header cell `x`.
pub fn read_observations(path: &Path) -> Result<Dataset> {
    let body = fs::read_to_string(path)
        .map_err(|e| Error::Data(format!("reading {}: {e}", path.display())))?;
    let mut obs = Vec::new();
    for (i, line) in body.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if i == 0 && line.eq_ignore_ascii_case("x") {
            continue;
        }
        let x: f64 = line.parse().map_err(|_| {
            Error::Data(format!(
                "{}: malformed CSV row at line {}: {line:?}",
                path.display(),
                i + 1
            ))
        })?;
        obs.push(x);
    }
    Dataset::new(obs)
}

/// Tabulated density: columns `x,f` on a uniform grid; the `x` column is
/// checked for monotonicity, cell values come from `f`.
pub fn read_grid_density(path: &Path) -> Result<GridDensity> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::Data(format!("reading {}: {e}", path.display())))?;
    let mut values = Vec::new();
    let mut prev_x = f64::NEG_INFINITY;
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        let line = i + 2; // header occupies line 1
        if record.len() < 2 {
            return Err(Error::Data(format!(
                "{}: malformed CSV row at line {line}: expected x,f",
                path.display()
            )));
        }
        let x: f64 = record[0].trim().parse().map_err(|_| {
            Error::Data(format!(
                "{}: malformed CSV row at line {line}: bad x {:?}",
                path.display(),
                &record[0]
            ))
        })?;
        let f: f64 = record[1].trim().parse().map_err(|_| {
            Error::Data(format!(
                "{}: malformed CSV row at line {line}: bad f {:?}",
                path.display(),
                &record[1]
            ))
        })?;
        if x <= prev_x {
            return Err(Error::Data(format!(
                "{}: x column must increase at line {line}",
                path.display()
            )));
        }
        if !(f.is_finite() && f >= 0.0) {
            return Err(Error::Data(format!(
                "{}: density value {f} at line {line} violates nonnegativity",
                path.display()
            )));
        }
        prev_x = x;
        values.push(f);
    }
    GridDensity::new(values)
}

/// Write `x,f`-style columns; each row newline-terminated.
pub fn write_columns(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::Data(format!("writing {}: {e}", path.display())))
}
