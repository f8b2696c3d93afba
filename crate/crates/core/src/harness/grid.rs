//! Plain-text result grids: a one-line header followed by one line per row.
//!
//! ```text
//! # <title> | rows <name> <unit> <start> <step> <count> | cols <name> <unit> <start> <step> <count>
//! <v00> <v01> …
//! ```
//!
//! Numbers use Rust's shortest round-trip formatting, so reading a file back
//! reproduces every value bit for bit (NaN payloads aside).

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;

use crate::{Error, Result};

/// Uniformly spaced axis: value `k` is `start + k·step`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridAxis {
    pub name: String,
    pub unit: String,
    pub start: f64,
    pub step: f64,
    pub count: usize,
}

impl GridAxis {
    pub fn new(name: &str, unit: &str, start: f64, step: f64, count: usize) -> Self {
        Self { name: name.into(), unit: unit.into(), start, step, count }
    }

    pub fn value(&self, k: usize) -> f64 {
        self.start + k as f64 * self.step
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.count).map(|k| self.value(k)).collect()
    }

    fn header(&self) -> String {
        format!("{} {} {:e} {:e} {}", self.name, self.unit, self.start, self.step, self.count)
    }

    fn parse(fields: &[&str]) -> Result<Self> {
        let [name, unit, start, step, count] = fields else {
            return Err(Error::Parse(format!("axis needs 5 fields, got {}", fields.len())));
        };
        Ok(Self {
            name: name.to_string(),
            unit: unit.to_string(),
            start: parse_f64(start)?,
            step: parse_f64(step)?,
            count: count.parse().map_err(|e| Error::Parse(format!("axis count '{count}': {e}")))?,
        })
    }
}

fn parse_f64(s: &str) -> Result<f64> {
    s.parse().map_err(|e| Error::Parse(format!("number '{s}': {e}")))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    pub title: String,
    pub rows: GridAxis,
    pub cols: GridAxis,
    pub values: DMatrix<f64>,
}

fn check_token(what: &str, s: &str) -> Result<()> {
    if s.is_empty() || s.chars().any(|c| c.is_whitespace() || c == '|') {
        return Err(Error::InvalidParameter(format!("{what} '{s}' must be a non-empty token without spaces or '|'")));
    }
    Ok(())
}

impl Grid {
    pub fn new(title: &str, rows: GridAxis, cols: GridAxis, values: DMatrix<f64>) -> Result<Self> {
        if title.contains('|') || title.contains('\n') {
            return Err(Error::InvalidParameter("grid title must not contain '|' or newlines".into()));
        }
        for axis in [&rows, &cols] {
            check_token("axis name", &axis.name)?;
            check_token("axis unit", &axis.unit)?;
        }
        if values.shape() != (rows.count, cols.count) {
            return Err(Error::Dimension(format!(
                "grid values are {:?} but axes give ({}, {})",
                values.shape(),
                rows.count,
                cols.count
            )));
        }
        Ok(Self { title: title.trim().into(), rows, cols, values })
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("# {} | rows {} | cols {}\n", self.title, self.rows.header(), self.cols.header());
        for r in 0..self.values.nrows() {
            for c in 0..self.values.ncols() {
                if c > 0 {
                    out.push(' ');
                }
                write!(out, "{:e}", self.values[(r, c)]).expect("writing to a String");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty grid file".into()))?;
        let header = header.strip_prefix("# ").ok_or_else(|| Error::Parse("grid header must start with '# '".into()))?;
        let parts: Vec<&str> = header.split(" | ").collect();
        let [title, rows, cols] = parts.as_slice() else {
            return Err(Error::Parse(format!("grid header needs 3 sections, got {}", parts.len())));
        };
        let axis = |section: &str, tag: &str| -> Result<GridAxis> {
            let fields: Vec<&str> = section.split_whitespace().collect();
            match fields.split_first() {
                Some((t, rest)) if *t == tag => GridAxis::parse(rest),
                _ => Err(Error::Parse(format!("expected '{tag}' section, got '{section}'"))),
            }
        };
        let rows = axis(rows, "rows")?;
        let cols = axis(cols, "cols")?;
        let mut data = Vec::with_capacity(rows.count * cols.count);
        let mut n_rows = 0;
        for line in lines {
            let before = data.len();
            for tok in line.split(' ') {
                data.push(parse_f64(tok)?);
            }
            if data.len() - before != cols.count {
                return Err(Error::Parse(format!("row {n_rows} has {} values, expected {}", data.len() - before, cols.count)));
            }
            n_rows += 1;
        }
        if n_rows != rows.count {
            return Err(Error::Parse(format!("grid has {n_rows} rows, header says {}", rows.count)));
        }
        let values = DMatrix::from_row_slice(rows.count, cols.count, &data);
        Self::new(title, rows, cols, values)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}
