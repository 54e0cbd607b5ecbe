use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::num::sig6;

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Int(i64),
    Num(f64),
    Text(String),
}

impl Value {
    pub fn render(&self) -> String {
        match self {
            Value::Int(k) => k.to_string(),
            Value::Num(x) => sig6(*x),
            Value::Text(s) => s.clone(),
        }
    }
}

impl From<f64> for Value {
    fn from(x: f64) -> Self {
        Value::Num(x)
    }
}

impl From<usize> for Value {
    fn from(k: usize) -> Self {
        Value::Int(k as i64)
    }
}

impl From<u32> for Value {
    fn from(k: u32) -> Self {
        Value::Int(k as i64)
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::Text(s.to_string())
    }
}

impl From<String> for Value {
    fn from(s: String) -> Self {
        Value::Text(s)
    }
}

/// One CSV file; `name` without extension.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self { name: name.to_string(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn with_columns(name: &str, columns: Vec<String>) -> Self {
        Self { name: name.to_string(), columns, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Value>) {
        assert_eq!(row.len(), self.columns.len(), "row width for table {}", self.name);
        self.rows.push(row);
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Value::render))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// An acceptance property of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Self { name: name.to_string(), passed, detail: detail.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Report {
    pub scenario: String,
    pub kind: String,
    pub seed: u64,
    pub tables: Vec<Table>,
    pub checks: Vec<Check>,
    /// Out-of-range values accepted on request.
    pub warnings: Vec<String>,
    /// Reported figures that are not asserted.
    pub notes: Vec<String>,
    /// Other files, such as checkpoints: (file name, contents).
    pub attachments: Vec<(String, String)>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "scenario {} ({}) seed {}", self.scenario, self.kind, self.seed);
        for w in &self.warnings {
            let _ = writeln!(s, "warning: {w}");
        }
        for n in &self.notes {
            let _ = writeln!(s, "note: {n}");
        }
        for c in &self.checks {
            let verdict = if c.passed { "PASS" } else { "FAIL" };
            let _ = writeln!(s, "{verdict} {}: {}", c.name, c.detail);
        }
        let passed = self.checks.iter().filter(|c| c.passed).count();
        let overall = if self.passed() { "PASS" } else { "FAIL" };
        let _ = writeln!(s, "{overall} {passed}/{} checks", self.checks.len());
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    /// Every table as CSV and every attachment, plus the summary.
    Csv,
    /// The summary text only.
    Summary,
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "summary" => Ok(Format::Summary),
            _ => Err(Error::Scenario { field: "--format".into(), reason: format!("unknown format `{s}`") }),
        }
    }
}

/// Writes the report under `dir` and returns the files written.
pub fn emit_report(report: &Report, dir: &Path, format: Format) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    if format == Format::Csv {
        for t in &report.tables {
            let path = dir.join(format!("{}.csv", t.name));
            t.write_csv(std::fs::File::create(&path)?)?;
            written.push(path);
        }
        for (name, text) in &report.attachments {
            let path = dir.join(name);
            std::fs::write(&path, text)?;
            written.push(path);
        }
    }
    let path = dir.join("summary.txt");
    std::fs::write(&path, report.summary())?;
    written.push(path);
    Ok(written)
}
