//! Strict reader and writer for the LIBSVM text format.
//!
//! ```text
//! 1.5 1:2.0 3:-1.0
//! -0.25 2:4
//! ```
//!
//! One sample per line: a label, then `index:value` pairs with 1-based,
//! strictly increasing indices. Comments are not accepted. The reader
//! densifies: rows of the returned matrix are samples.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

struct Row {
    label: f64,
    entries: Vec<(usize, f64)>,
}

fn parse_line(line: &str) -> std::result::Result<Row, String> {
    if line.contains('#') {
        return Err("comments are not allowed".into());
    }
    let mut tokens = line.split_whitespace();
    let label_tok = tokens.next().ok_or("missing label")?;
    let label: f64 = label_tok
        .parse()
        .map_err(|_| format!("label `{label_tok}` is not a number"))?;
    let mut entries = Vec::new();
    let mut last = 0usize;
    for tok in tokens {
        let (idx, val) = tok
            .split_once(':')
            .ok_or_else(|| format!("token `{tok}` is not an index:value pair"))?;
        let idx: usize = idx
            .parse()
            .map_err(|_| format!("index `{idx}` is not a positive integer"))?;
        if idx == 0 {
            return Err("indices are 1-based".into());
        }
        if idx <= last {
            return Err(format!("index {idx} does not increase (previous {last})"));
        }
        let val: f64 = val
            .parse()
            .map_err(|_| format!("value `{val}` is not a number"))?;
        if !val.is_finite() || !label.is_finite() {
            return Err("non-finite number".into());
        }
        entries.push((idx, val));
        last = idx;
    }
    Ok(Row { label, entries })
}

/// Parses LIBSVM text. `origin` only labels error messages.
pub fn parse_libsvm(
    text: &str,
    n_features: Option<usize>,
    origin: &Path,
) -> Result<(Array2<f64>, Array1<f64>)> {
    let err = |line: usize, msg: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        msg,
    };
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = parse_line(line).map_err(|m| err(i + 1, m))?;
        if let (Some(limit), Some(&(idx, _))) = (n_features, row.entries.last()) {
            if idx > limit {
                return Err(err(
                    i + 1,
                    format!("index {idx} exceeds feature count {limit}"),
                ));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(err(0, "no samples".into()));
    }
    let cols = n_features.unwrap_or_else(|| {
        rows.iter()
            .filter_map(|r| r.entries.last().map(|&(i, _)| i))
            .max()
            .unwrap_or(0)
    });
    let mut a = Array2::zeros((rows.len(), cols));
    let mut b = Array1::zeros(rows.len());
    for (r, row) in rows.iter().enumerate() {
        b[r] = row.label;
        for &(idx, val) in &row.entries {
            a[[r, idx - 1]] = val;
        }
    }
    Ok((a, b))
}

pub fn read_libsvm(path: &Path, n_features: Option<usize>) -> Result<(Array2<f64>, Array1<f64>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_libsvm(&text, n_features, path)
}

/// Formats a dense matrix in LIBSVM text, omitting zeros.
pub fn format_libsvm(a: &Array2<f64>, b: &Array1<f64>) -> Result<String> {
    if a.nrows() != b.len() {
        return Err(Error::Argument(
            "label count does not match row count".into(),
        ));
    }
    let mut out = String::new();
    for (r, row) in a.rows().into_iter().enumerate() {
        write!(out, "{}", b[r]).unwrap();
        for (j, &v) in row.iter().enumerate() {
            if v != 0.0 {
                write!(out, " {}:{}", j + 1, v).unwrap();
            }
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn write_libsvm(path: &Path, a: &Array2<f64>, b: &Array1<f64>) -> Result<()> {
    fs::write(path, format_libsvm(a, b)?).map_err(|e| Error::io(path, e))
}
