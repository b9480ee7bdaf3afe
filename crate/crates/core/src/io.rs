//! Delimited text files of SPD matrices, one matrix per row.
//!
//! Lines that are blank or start with `#` are skipped. Rows are numbered by
//! their 1-based line number in the file; columns are 1-based.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kde::Sample;
use crate::spd::{half_len, validate_spd, HalfVector, SpdMatrix, SymmetricMatrix, unhalf_vectorize};

/// Relative asymmetry accepted (and symmetrized) in the full layout.
pub const FULL_LAYOUT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layout {
    /// d(d+1)/2 columns: upper triangle row by row, diagonal included.
    Vech,
    /// d² columns, row-major.
    Full,
}

impl Layout {
    pub fn columns(&self, dim: usize) -> usize {
        match self {
            Layout::Vech => half_len(dim),
            Layout::Full => dim * dim,
        }
    }
}

impl FromStr for Layout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vech" => Ok(Layout::Vech),
            "full" => Ok(Layout::Full),
            other => Err(Error::InvalidParameter(format!("unknown layout '{other}' (expected vech or full)"))),
        }
    }
}

/// How to read a matrix file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatrixFormat {
    pub dim: usize,
    pub layout: Layout,
    pub delimiter: char,
}

impl MatrixFormat {
    pub fn new(dim: usize, layout: Layout, delimiter: char) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be at least 1".into()));
        }
        Ok(Self { dim, layout, delimiter })
    }
}

fn parse_row(line: &str, row: usize, format: &MatrixFormat) -> Result<SpdMatrix> {
    let expected = format.layout.columns(format.dim);
    let fields: Vec<&str> = line.split(format.delimiter).map(str::trim).collect();
    if fields.len() != expected {
        return Err(Error::ColumnCountMismatch { row, expected, found: fields.len() });
    }
    let mut values = Vec::with_capacity(expected);
    for (k, field) in fields.iter().enumerate() {
        let v: f64 = field.parse().map_err(|_| Error::Parse {
            row,
            column: k + 1,
            message: format!("'{field}' is not a number"),
        })?;
        if !v.is_finite() {
            return Err(Error::Parse { row, column: k + 1, message: format!("'{field}' is not finite") });
        }
        values.push(v);
    }
    let wrap = |e: Error| Error::Row { row, source: Box::new(e) };
    let sym = match format.layout {
        Layout::Vech => unhalf_vectorize(&HalfVector::new(format.dim, values).map_err(wrap)?),
        Layout::Full => SymmetricMatrix::new(format.dim, values).map_err(wrap)?,
    };
    validate_spd(&sym, FULL_LAYOUT_TOL).map_err(wrap)
}

/// Parse matrix rows from text.
pub fn parse_matrix_str(text: &str, format: &MatrixFormat) -> Result<Sample> {
    let mut items = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        items.push(parse_row(trimmed, i + 1, format)?);
    }
    Sample::new(items)
}

pub fn parse_matrix_file(path: &Path, format: &MatrixFormat) -> Result<Sample> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_matrix_str(&text, format)
}

/// Render a sample in the given layout; parsing the output reproduces the
/// entries bit for bit.
pub fn write_matrix_str(sample: &Sample, layout: Layout, delimiter: char) -> String {
    let mut out = String::new();
    for m in sample.items() {
        let values: Vec<f64> = match layout {
            Layout::Vech => m.half_vector().values().to_vec(),
            Layout::Full => m.entries().to_vec(),
        };
        for (k, v) in values.iter().enumerate() {
            if k > 0 {
                out.push(delimiter);
            }
            // `{:?}` prints the shortest representation that round-trips.
            let _ = write!(out, "{v:?}");
        }
        out.push('\n');
    }
    out
}

pub fn write_matrix_file(path: &Path, sample: &Sample, layout: Layout, delimiter: char) -> Result<()> {
    std::fs::write(path, write_matrix_str(sample, layout, delimiter))
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}
