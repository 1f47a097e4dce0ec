//! Rectangular result tables with a metadata block, written as CSV or JSON.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::ScenarioError;

/// One table cell. Non-finite reals are stored as `Null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Null,
    Bool(bool),
    Int(i64),
    Real(f64),
    Text(String),
}

impl Cell {
    pub fn real(x: f64) -> Self {
        if x.is_finite() {
            Cell::Real(x)
        } else {
            Cell::Null
        }
    }

    pub fn text(s: impl Into<String>) -> Self {
        Cell::Text(s.into())
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Real(x) => Some(*x),
            Cell::Int(i) => Some(*i as f64),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Cell::Text(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Cell::Bool(b) => Some(*b),
            _ => None,
        }
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Null => Ok(()),
            Cell::Bool(b) => write!(f, "{b}"),
            Cell::Int(i) => write!(f, "{i}"),
            Cell::Real(x) => f.write_str(&format_real(*x)),
            Cell::Text(s) => f.write_str(s),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::real(x)
    }
}

impl From<bool> for Cell {
    fn from(b: bool) -> Self {
        Cell::Bool(b)
    }
}

impl From<usize> for Cell {
    fn from(i: usize) -> Self {
        Cell::Int(i as i64)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

/// Formats like C's `%.17g`: 17 significant digits, trailing zeros removed,
/// exponent form outside `[1e-4, 1e17)`.
pub fn format_real(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{x:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..17).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (16 - exp) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub tool_version: String,
    /// SHA-256 of the canonical scenario serialization.
    pub scenario_hash: String,
    pub seed: u64,
    pub command: String,
    #[serde(default)]
    pub extras: BTreeMap<String, String>,
}

impl Metadata {
    pub fn new(command: &str, scenario_hash: &str, seed: u64) -> Self {
        Self {
            tool_version: tool_version(),
            scenario_hash: scenario_hash.to_string(),
            seed,
            command: command.to_string(),
            extras: BTreeMap::new(),
        }
    }
}

pub fn tool_version() -> String {
    format!("radv {}", env!("CARGO_PKG_VERSION"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub metadata: Metadata,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl ResultTable {
    pub fn new(metadata: Metadata, columns: &[&str]) -> Result<Self, ScenarioError> {
        let columns: Vec<String> = columns.iter().map(|c| c.to_string()).collect();
        check_columns(&columns)?;
        Ok(Self {
            metadata,
            columns,
            rows: Vec::new(),
        })
    }

    pub fn push(&mut self, row: Vec<Cell>) -> Result<(), ScenarioError> {
        if row.len() != self.columns.len() {
            return Err(ScenarioError::Table(format!(
                "row {} has {} cells but the table has {} columns",
                self.rows.len(),
                row.len(),
                self.columns.len()
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn set_extra(&mut self, key: &str, value: impl ToString) {
        self.metadata.extras.insert(key.to_string(), value.to_string());
    }

    pub fn extra(&self, key: &str) -> Option<&str> {
        self.metadata.extras.get(key).map(String::as_str)
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Cells of the named column, top to bottom.
    pub fn column_cells(&self, name: &str) -> Option<Vec<&Cell>> {
        let i = self.column(name)?;
        Some(self.rows.iter().map(|r| &r[i]).collect())
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        check_columns(&self.columns)?;
        match self.rows.iter().position(|r| r.len() != self.columns.len()) {
            Some(i) => Err(ScenarioError::Table(format!("row {i} is not rectangular"))),
            None => Ok(()),
        }
    }

    pub fn write<W: Write>(&self, format: Format, out: W) -> Result<(), ScenarioError> {
        match format {
            Format::Csv => self.write_csv(out),
            Format::Json => self.write_json(out),
        }
    }

    pub fn to_bytes(&self, format: Format) -> Result<Vec<u8>, ScenarioError> {
        let mut buf = Vec::new();
        self.write(format, &mut buf)?;
        Ok(buf)
    }

    /// `#`-prefixed metadata lines, one header line, then the rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<(), ScenarioError> {
        let m = &self.metadata;
        let mut lines = vec![
            ("tool_version", m.tool_version.as_str()),
            ("scenario_hash", m.scenario_hash.as_str()),
            ("command", m.command.as_str()),
        ];
        let seed = m.seed.to_string();
        lines.insert(2, ("seed", &seed));
        for (k, v) in &lines {
            writeln!(out, "# {k}: {}", one_line(v))?;
        }
        for (k, v) in &m.extras {
            writeln!(out, "# {k}: {}", one_line(v))?;
        }
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|c| c.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_json<W: Write>(&self, mut out: W) -> Result<(), ScenarioError> {
        serde_json::to_writer_pretty(&mut out, self)
            .map_err(|e| ScenarioError::Table(e.to_string()))?;
        writeln!(out)?;
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let table: Self =
            serde_json::from_str(text).map_err(|e| ScenarioError::Table(e.to_string()))?;
        table.validate()?;
        Ok(table)
    }

    /// Reads a table written by [`write_csv`](Self::write_csv). Cells come
    /// back as text; real columns can be reparsed with `str::parse::<f64>`.
    pub fn from_csv(text: &str) -> Result<Self, ScenarioError> {
        let mut fields = BTreeMap::new();
        for line in text.lines().take_while(|l| l.starts_with('#')) {
            let body = line.trim_start_matches('#').trim_start();
            let (k, v) = body
                .split_once(": ")
                .ok_or_else(|| ScenarioError::Table(format!("bad metadata line {line:?}")))?;
            fields.insert(k.to_string(), v.to_string());
        }
        let mut take = |k: &str| {
            fields
                .remove(k)
                .ok_or_else(|| ScenarioError::Table(format!("metadata is missing {k}")))
        };
        let tool_version = take("tool_version")?;
        let scenario_hash = take("scenario_hash")?;
        let seed = take("seed")?
            .parse()
            .map_err(|_| ScenarioError::Table("seed is not an integer".into()))?;
        let command = take("command")?;
        let metadata = Metadata {
            tool_version,
            scenario_hash,
            seed,
            command,
            extras: fields,
        };

        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let columns = reader.headers()?.iter().map(String::from).collect();
        let mut rows = Vec::new();
        for rec in reader.records() {
            rows.push(rec?.iter().map(|s| Cell::Text(s.to_string())).collect());
        }
        let table = Self {
            metadata,
            columns,
            rows,
        };
        table.validate()?;
        Ok(table)
    }
}

fn one_line(s: &str) -> String {
    s.replace(['\n', '\r'], " ")
}

fn check_columns(columns: &[String]) -> Result<(), ScenarioError> {
    for (i, c) in columns.iter().enumerate() {
        if columns[..i].contains(c) {
            return Err(ScenarioError::Table(format!("duplicate column name {c:?}")));
        }
    }
    Ok(())
}
