//! Design and response CSV formats.
//!
//! Designs: a header row of factor names, body rows of levels in [-1, 1], and
//! an optional trailing `replicate_of` column holding the 1-based row index of
//! the replicated run (empty for D_u rows). Lines starting with `#` are
//! ignored, which is where CLI outputs carry their provenance header.
//!
//! Responses: a header row of column names, one response column per analysis
//! (the reactor fixture ships nine columns, y1..y9).

use std::fs;
use std::path::Path;

use crate::design::Design;
use crate::error::{Error, Result};
use crate::numerics::Mat;

fn csv_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Csv { path: path.display().to_string(), message: message.into() }
}

/// Format a level the way the writer does: integers without a decimal point,
/// everything else via the shortest round-trip representation.
pub fn format_level(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

/// Load a design from CSV.
pub fn load_csv(path: impl AsRef<Path>) -> Result<Design> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)
        .map_err(|source| Error::Io { path: path.display().to_string(), source })?;
    parse_csv(&text).map_err(|m| csv_err(path, m))
}

fn parse_csv(text: &str) -> std::result::Result<Design, String> {
    let mut lines = text.lines().filter(|l| !l.trim_start().starts_with('#'));
    let header = lines.next().ok_or("missing header row")?;
    let mut names: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
    let has_rep = names.last().map(|s| s == "replicate_of").unwrap_or(false);
    if has_rep {
        names.pop();
    }
    let k = names.len();
    if k == 0 {
        return Err("header has no factor columns".into());
    }
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut rep_raw: Vec<Option<usize>> = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(|s| s.trim()).collect();
        let expect = k + usize::from(has_rep);
        if fields.len() != expect {
            return Err(format!(
                "row {}: {} fields, expected {expect}",
                lineno + 2,
                fields.len()
            ));
        }
        let mut row = Vec::with_capacity(k);
        for (j, f) in fields[..k].iter().enumerate() {
            let v: f64 = f
                .parse()
                .map_err(|_| format!("row {}: cannot parse level '{f}'", lineno + 2))?;
            if !(-1.0..=1.0).contains(&v) {
                return Err(format!(
                    "row {}: level {v} for factor {} outside [-1, 1]",
                    lineno + 2,
                    names[j]
                ));
            }
            row.push(v);
        }
        rows.push(row);
        if has_rep {
            let f = fields[k];
            if f.is_empty() {
                rep_raw.push(None);
            } else {
                let idx: usize = f
                    .parse()
                    .map_err(|_| format!("row {}: bad replicate_of '{f}'", lineno + 2))?;
                if idx == 0 {
                    return Err(format!("row {}: replicate_of is 1-based", lineno + 2));
                }
                rep_raw.push(Some(idx - 1));
            }
        } else {
            rep_raw.push(None);
        }
    }
    if rows.is_empty() {
        return Err("empty body".into());
    }
    let settings = Mat::from_rows(&rows).map_err(|e| e.to_string())?;
    Design::with_inferred_levels(settings, names, rep_raw).map_err(|e| e.to_string())
}

/// Render a design as CSV text (no provenance header).
pub fn write_csv_string(design: &Design) -> String {
    let has_rep = design.replicate_of().iter().any(|r| r.is_some());
    let mut out = String::new();
    out.push_str(&design.factor_names().join(","));
    if has_rep {
        out.push_str(",replicate_of");
    }
    out.push('\n');
    for i in 0..design.n() {
        let row: Vec<String> = design.settings().row(i).iter().map(|&v| format_level(v)).collect();
        out.push_str(&row.join(","));
        if has_rep {
            out.push(',');
            if let Some(p) = design.replicate_of()[i] {
                out.push_str(&(p + 1).to_string());
            }
        }
        out.push('\n');
    }
    out
}

/// Save a design as CSV; round-trips byte-for-byte through `load_csv` for
/// files this writer produced.
pub fn save_csv(design: &Design, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, write_csv_string(design))
        .map_err(|source| Error::Io { path: path.display().to_string(), source })
}

/// Load response columns from CSV: header row of column names, numeric body.
/// Returns the columns in header order with their names.
pub fn load_response_sets(path: impl AsRef<Path>) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)
        .map_err(|source| Error::Io { path: path.display().to_string(), source })?;
    let mut lines = text.lines().filter(|l| !l.trim_start().starts_with('#'));
    let header = lines.next().ok_or_else(|| csv_err(path, "missing header row"))?;
    let names: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(|s| s.trim()).collect();
        if fields.len() != names.len() {
            return Err(csv_err(
                path,
                format!("row {}: {} fields, expected {}", lineno + 2, fields.len(), names.len()),
            ));
        }
        for (j, f) in fields.iter().enumerate() {
            let v: f64 = f
                .parse()
                .map_err(|_| csv_err(path, format!("row {}: bad value '{f}'", lineno + 2)))?;
            cols[j].push(v);
        }
    }
    if cols.iter().any(|c| c.is_empty()) {
        return Err(csv_err(path, "empty body"));
    }
    Ok((names, cols))
}
