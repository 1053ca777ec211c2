//! Tabular results with provenance metadata, and their file encodings.
//!
//! CSV layout:
//!
//! ```text
//! # key=value            one line per metadata entry, keys sorted
//! delta[kappa],R_l[1],tau_rl[1/kappa]?,status_rl[code]
//! -5.00000000000e0,...
//! ```
//!
//! Header tokens are `name[unit]`; a trailing `?` marks a nullable column,
//! the only kind allowed to hold `NaN`. Values use scientific notation with
//! a configurable number of significant digits (12 by default) and `.` as the
//! decimal separator.
//!
//! JSON layout: one object `{"metadata": {..}, "columns": [{"name", "unit",
//! "nullable"}], "rows": [[..], ..]}` with `null` in place of `NaN`.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const DEFAULT_PRECISION: usize = 12;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub unit: String,
    pub nullable: bool,
}

impl Column {
    pub fn new(name: impl Into<String>, unit: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            unit: unit.into(),
            nullable: false,
        }
    }

    pub fn nullable(name: impl Into<String>, unit: impl Into<String>) -> Self {
        Self {
            nullable: true,
            ..Self::new(name, unit)
        }
    }

    fn header(&self) -> String {
        format!("{}[{}]{}", self.name, self.unit, if self.nullable { "?" } else { "" })
    }

    fn parse_header(token: &str) -> Result<Self> {
        let (body, nullable) = match token.strip_suffix('?') {
            Some(b) => (b, true),
            None => (token, false),
        };
        let open = body
            .find('[')
            .filter(|_| body.ends_with(']'))
            .ok_or_else(|| Error::Format(format!("header token `{token}` is not name[unit]")))?;
        Ok(Self {
            name: body[..open].to_string(),
            unit: body[open + 1..body.len() - 1].to_string(),
            nullable,
        })
    }
}

/// File encoding of a [`Dataset`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Csv => "csv",
            Format::Json => "json",
        })
    }
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(Error::Config(format!("unknown output format `{other}` (csv or json)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub columns: Vec<Column>,
    pub rows: Vec<Vec<f64>>,
    pub metadata: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
struct JsonDataset {
    metadata: BTreeMap<String, String>,
    columns: Vec<Column>,
    rows: Vec<Vec<Option<f64>>>,
}

impl Dataset {
    pub fn new(columns: Vec<Column>) -> Self {
        Self {
            columns,
            ..Self::default()
        }
    }

    pub fn set_meta(&mut self, key: impl Into<String>, value: impl ToString) {
        self.metadata.insert(key.into(), value.to_string());
    }

    /// Appends a row after checking its width and that `NaN` only appears in
    /// nullable columns.
    pub fn push_row(&mut self, row: Vec<f64>) -> Result<()> {
        self.check_row(&row)?;
        self.rows.push(row);
        Ok(())
    }

    fn check_row(&self, row: &[f64]) -> Result<()> {
        if row.len() != self.columns.len() {
            return Err(Error::Format(format!(
                "row has {} values for {} columns",
                row.len(),
                self.columns.len()
            )));
        }
        for (v, c) in row.iter().zip(&self.columns) {
            if v.is_nan() && !c.nullable {
                return Err(Error::Format(format!("NaN in non-nullable column `{}`", c.name)));
            }
            if v.is_infinite() {
                return Err(Error::Format(format!("infinite value in column `{}`", c.name)));
            }
        }
        Ok(())
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.column_index(name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }

    pub fn to_csv_string(&self, precision: usize) -> Result<String> {
        let mut out = String::new();
        for (k, v) in &self.metadata {
            if k.contains(['=', '\n']) || v.contains('\n') {
                return Err(Error::Format(format!("metadata entry `{k}` cannot be encoded")));
            }
            out.push_str(&format!("# {k}={v}\n"));
        }
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        let csv_err = |e: csv::Error| Error::Format(e.to_string());
        w.write_record(self.columns.iter().map(Column::header)).map_err(csv_err)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|&v| format_value(v, precision))).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
        out.push_str(&String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))?);
        Ok(out)
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut metadata = BTreeMap::new();
        let mut body_start = 0;
        for line in text.split_inclusive('\n') {
            let Some(entry) = line.strip_prefix("# ") else { break };
            let entry = entry.trim_end_matches('\n');
            let (k, v) = entry
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("metadata line `{entry}` lacks `=`")))?;
            metadata.insert(k.to_string(), v.to_string());
            body_start += line.len();
        }
        let mut reader = csv::ReaderBuilder::new().from_reader(text[body_start..].as_bytes());
        let columns = reader
            .headers()
            .map_err(|e| Error::Format(e.to_string()))?
            .iter()
            .map(Column::parse_header)
            .collect::<Result<Vec<_>>>()?;
        let mut ds = Dataset {
            columns,
            rows: Vec::new(),
            metadata,
        };
        for record in reader.records() {
            let record = record.map_err(|e| Error::Format(e.to_string()))?;
            let row = record
                .iter()
                .map(|t| t.parse::<f64>().map_err(|_| Error::Format(format!("bad number `{t}`"))))
                .collect::<Result<Vec<_>>>()?;
            ds.push_row(row)?;
        }
        Ok(ds)
    }

    pub fn to_json_string(&self, precision: usize) -> Result<String> {
        let rows = self
            .rows
            .iter()
            .map(|r| {
                r.iter()
                    .map(|&v| (!v.is_nan()).then(|| round_to_precision(v, precision)))
                    .collect()
            })
            .collect();
        let doc = JsonDataset {
            metadata: self.metadata.clone(),
            columns: self.columns.clone(),
            rows,
        };
        let mut s = serde_json::to_string_pretty(&doc).map_err(|e| Error::Format(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let doc: JsonDataset = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        let mut ds = Dataset::new(doc.columns);
        ds.metadata = doc.metadata;
        for row in doc.rows {
            ds.push_row(row.into_iter().map(|v| v.unwrap_or(f64::NAN)).collect())?;
        }
        Ok(ds)
    }

    pub fn encode(&self, format: Format, precision: usize) -> Result<String> {
        match format {
            Format::Csv => self.to_csv_string(precision),
            Format::Json => self.to_json_string(precision),
        }
    }

    /// Writes the dataset atomically: the content goes to a temporary file
    /// in the target directory which is then renamed over `path`.
    pub fn write(&self, path: &Path, format: Format, precision: usize) -> Result<()> {
        let text = self.encode(format, precision)?;
        write_atomic(path, text.as_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Self::from_json_str(&text),
            _ => Self::from_csv_str(&text),
        }
    }
}

/// Scientific notation with `precision` significant digits; `NaN` verbatim.
pub fn format_value(v: f64, precision: usize) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else {
        format!("{:.*e}", precision.max(1) - 1, v)
    }
}

fn round_to_precision(v: f64, precision: usize) -> f64 {
    format_value(v, precision).parse().expect("formatted float parses")
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error.to_string()))?;
    Ok(())
}
