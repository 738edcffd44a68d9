//! CSV emission.
//!
//! Each file starts with `#` comment lines carrying the code version, seed,
//! spin convention and the fully resolved config, followed by one header row
//! and the data rows. Numbers are written with 17 significant digits.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{CliError, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Num(f64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

/// `x` in scientific notation with 17 significant digits.
pub fn format_number(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

fn quote(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// One output file.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub file_name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    /// Results that do not fit the rows, written as `# key = value`.
    pub metadata: Vec<(String, String)>,
}

impl Table {
    pub fn new(file_name: impl Into<String>, columns: &[impl AsRef<str>]) -> Self {
        Table {
            file_name: file_name.into(),
            columns: columns.iter().map(|c| c.as_ref().to_string()).collect(),
            rows: Vec::new(),
            metadata: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn note(&mut self, key: impl Into<String>, value: impl ToString) {
        self.metadata.push((key.into(), value.to_string()));
    }

    /// Full file contents below the shared `header` lines.
    pub fn render(&self, header: &[String]) -> String {
        let mut out = String::new();
        for line in header {
            let _ = writeln!(out, "# {line}");
        }
        for (k, v) in &self.metadata {
            let _ = writeln!(out, "# result.{k} = {v}");
        }
        let _ = writeln!(
            out,
            "{}",
            self.columns
                .iter()
                .map(|c| quote(c))
                .collect::<Vec<_>>()
                .join(",")
        );
        for row in &self.rows {
            let cells: Vec<String> = row
                .iter()
                .map(|c| match c {
                    Cell::Num(x) => format_number(*x),
                    Cell::Text(s) => quote(s),
                })
                .collect();
            let _ = writeln!(out, "{}", cells.join(","));
        }
        out
    }

    pub fn write(&self, dir: &Path, header: &[String]) -> Result<PathBuf> {
        fs::create_dir_all(dir)
            .map_err(|e| CliError::io(format!("creating {}", dir.display()), e))?;
        let path = dir.join(&self.file_name);
        fs::write(&path, self.render(header))
            .map_err(|e| CliError::io(format!("writing {}", path.display()), e))?;
        Ok(path)
    }
}
