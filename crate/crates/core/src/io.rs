//! Matrix files: comma-separated text (`.csv`) and a little-endian binary
//! layout (`.dmnd`: magic `DMND`, u32 rows, u32 cols, f64 values row-major).

use std::fs;
use std::path::Path;

use crate::error::{DemandError, Result};
use crate::matrix::DenseMatrix;

const MAGIC: &[u8; 4] = b"DMND";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFormat {
    Csv,
    Dmnd,
}

impl MatrixFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("csv") => Ok(MatrixFormat::Csv),
            Some("dmnd") => Ok(MatrixFormat::Dmnd),
            _ => Err(DemandError::Format {
                path: path.to_path_buf(),
                msg: "unknown extension, expected .csv or .dmnd".into(),
            }),
        }
    }
}

fn format_err(path: &Path, msg: impl Into<String>) -> DemandError {
    DemandError::Format {
        path: path.to_path_buf(),
        msg: msg.into(),
    }
}

pub fn parse_csv(text: &str, path: &Path) -> Result<DenseMatrix> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split(',')
            .map(|f| {
                let f = f.trim();
                f.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| format_err(path, format!("line {}: bad value {f:?}", lineno + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(format_err(
                    path,
                    format!("line {}: {} values, expected {}", lineno + 1, row.len(), first.len()),
                ));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(format_err(path, "no data rows"));
    }
    let (r, c) = (rows.len(), rows[0].len());
    DenseMatrix::new(r, c, rows.concat()).map_err(|e| format_err(path, e.to_string()))
}

/// One line per row; values use the shortest text that parses back to the
/// same `f64`.
pub fn to_csv(m: &DenseMatrix) -> String {
    let mut out = String::with_capacity(m.len() * 20);
    for r in 0..m.rows() {
        for (j, v) in m.row(r).iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    out
}

pub fn parse_dmnd(bytes: &[u8], path: &Path) -> Result<DenseMatrix> {
    if bytes.len() < 12 || &bytes[..4] != MAGIC {
        return Err(format_err(path, "missing DMND header"));
    }
    let rows = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let cols = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let body = &bytes[12..];
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| format_err(path, "dimensions overflow"))?;
    if body.len() != expected {
        return Err(format_err(
            path,
            format!("{rows}x{cols} needs {expected} data bytes, found {}", body.len()),
        ));
    }
    let data = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    DenseMatrix::new(rows, cols, data).map_err(|e| format_err(path, e.to_string()))
}

pub fn to_dmnd(m: &DenseMatrix) -> Result<Vec<u8>> {
    let dim = |n: usize| {
        u32::try_from(n).map_err(|_| DemandError::Input(format!("dimension {n} does not fit the dmnd header")))
    };
    let mut out = Vec::with_capacity(12 + 8 * m.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&dim(m.rows())?.to_le_bytes());
    out.extend_from_slice(&dim(m.cols())?.to_le_bytes());
    for v in m.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

/// Reads a matrix, choosing the format from the file extension.
pub fn read_matrix(path: impl AsRef<Path>) -> Result<DenseMatrix> {
    let path = path.as_ref();
    match MatrixFormat::from_path(path)? {
        MatrixFormat::Csv => {
            let text = fs::read_to_string(path).map_err(|e| DemandError::io(path, e))?;
            parse_csv(&text, path)
        }
        MatrixFormat::Dmnd => {
            let bytes = fs::read(path).map_err(|e| DemandError::io(path, e))?;
            parse_dmnd(&bytes, path)
        }
    }
}

pub fn write_matrix(path: impl AsRef<Path>, m: &DenseMatrix) -> Result<()> {
    let path = path.as_ref();
    let bytes = match MatrixFormat::from_path(path)? {
        MatrixFormat::Csv => to_csv(m).into_bytes(),
        MatrixFormat::Dmnd => to_dmnd(m)?,
    };
    fs::write(path, bytes).map_err(|e| DemandError::io(path, e))
}
