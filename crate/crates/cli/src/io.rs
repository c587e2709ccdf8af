//! CSV ingestion and result writers. Floats are written in Rust's shortest
//! round-trip form, so every numeric file parses back to the same bits.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use revar::TimeSeriesData;
use serde::Serialize;

/// Failures the CLI reports as machine-readable JSON.
#[derive(Debug, Serialize)]
pub struct CliError {
    pub kind: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    /// 1-based line in the input file, header included.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub line: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub column: Option<String>,
}

impl CliError {
    pub fn new(kind: &'static str, message: impl Into<String>) -> Self {
        Self {
            kind,
            message: message.into(),
            path: None,
            line: None,
            column: None,
        }
    }

    fn at(mut self, path: &Path) -> Self {
        self.path = Some(path.display().to_string());
        self
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<revar::Error> for CliError {
    fn from(e: revar::Error) -> Self {
        CliError::new("estimation", e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::new("io", e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::new("serialization", e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::new("io", e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Reads a header-first CSV of `T` rows (oldest first) and `q` numeric
/// columns.
pub fn read_series(path: &Path) -> CliResult<TimeSeriesData> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::new("input", e.to_string()).at(path))?;
    let names: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::new("input", e.to_string()).at(path))?
        .iter()
        .map(str::to_string)
        .collect();
    if names.is_empty() || names.iter().all(String::is_empty) {
        return Err(CliError::new("input", "input has no header row").at(path));
    }
    let q = names.len();
    let mut values = Vec::new();
    let mut rows = 0;
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| {
            let mut err = CliError::new("input", e.to_string()).at(path);
            err.line = Some(line);
            err
        })?;
        if record.len() != q {
            let mut err = CliError::new("input", format!("expected {q} fields, found {}", record.len())).at(path);
            err.line = Some(line);
            return Err(err);
        }
        for (j, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| {
                let mut err = CliError::new("input", format!("non-numeric value `{cell}`")).at(path);
                err.line = Some(line);
                err.column = Some(names[j].clone());
                err
            })?;
            values.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(CliError::new("input", "input has no data rows").at(path));
    }
    let m = DMatrix::from_row_slice(rows, q, &values);
    Ok(TimeSeriesData::with_names(m, names)?)
}

pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else {
        format!("{x}")
    }
}

pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

/// Output directory handle; creates the directory on first use.
pub struct OutDir {
    root: PathBuf,
    written: Vec<String>,
}

impl OutDir {
    pub fn new(root: PathBuf) -> CliResult<Self> {
        fs::create_dir_all(&root).map_err(|e| CliError::new("io", format!("{}: {e}", root.display())))?;
        Ok(Self {
            root,
            written: Vec::new(),
        })
    }

    pub fn written(&self) -> &[String] {
        &self.written
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.text(name, &text)
    }

    pub fn text(&mut self, name: &str, text: &str) -> CliResult<()> {
        fs::write(self.root.join(name), text)?;
        self.written.push(name.to_string());
        Ok(())
    }

    /// A matrix as CSV with optional column names.
    pub fn matrix(&mut self, name: &str, m: &DMatrix<f64>, header: Option<&[String]>) -> CliResult<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        if let Some(h) = header {
            w.write_record(h)?;
        }
        for r in 0..m.nrows() {
            w.write_record(m.row(r).iter().map(|&x| fmt_f64(x)))?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::new("io", e.to_string()))?;
        self.text(name, &String::from_utf8(bytes).expect("utf-8 csv"))
    }

    pub fn table(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> CliResult<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::new("io", e.to_string()))?;
        self.text(name, &String::from_utf8(bytes).expect("utf-8 csv"))
    }
}

/// Column labels `y1.l1, y2.l1, …` for the stacked lag block of `β`.
pub fn lag_labels(names: &[String], p: usize) -> Vec<String> {
    (1..=p)
        .flat_map(|k| names.iter().map(move |n| format!("{n}.l{k}")))
        .collect()
}

pub fn series_names(data: &TimeSeriesData) -> Vec<String> {
    data.names()
        .map(<[String]>::to_vec)
        .unwrap_or_else(|| (1..=data.dim()).map(|j| format!("y{j}")).collect())
}
