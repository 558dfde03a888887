//! Tables, run records and their on-disk form.
//!
//! Data files are CSV: `#` header lines naming the tool version, experiment,
//! seed and config hash, then a header row, comma separators, `.` decimal
//! point and LF line endings. Reals are written with Rust's shortest
//! round-trip formatting, so a file is a pure function of the values.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use bbmx_core::stats::ComparisonReport;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Int(i64),
    Real(f64),
    Text(String),
}

impl Cell {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Int(i) => Some(*i as f64),
            Cell::Real(x) => Some(*x),
            Cell::Text(_) => None,
        }
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Int(i) => write!(f, "{i}"),
            // Both forms are shortest round-trip; the exponent keeps very
            // small and very large values short.
            Cell::Real(x) if *x != 0.0 && (x.abs() < 1e-5 || x.abs() >= 1e16) => write!(f, "{x:e}"),
            Cell::Real(x) => write!(f, "{x}"),
            Cell::Text(s) if s.contains([',', '"', '\n']) => write!(f, "\"{}\"", s.replace('"', "\"\"")),
            Cell::Text(s) => f.write_str(s),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Real(x)
    }
}

impl From<usize> for Cell {
    fn from(i: usize) -> Self {
        Cell::Int(i as i64)
    }
}

impl From<u64> for Cell {
    fn from(i: u64) -> Self {
        Cell::Int(i as i64)
    }
}

impl From<bool> for Cell {
    fn from(b: bool) -> Self {
        Cell::Text(b.to_string())
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

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len(), "row width for table {}", self.name);
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Numeric values of one column, in row order; text cells are skipped.
    pub fn column(&self, name: &str) -> CliResult<Vec<f64>> {
        let idx = self
            .columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| CliError::Plot(format!("table {} has no column `{name}`", self.name)))?;
        Ok(self.rows.iter().filter_map(|r| r[idx].as_f64()).collect())
    }

    pub fn to_csv(&self, header: &FileHeader) -> String {
        let mut out = header.comment_lines();
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|c| c.to_string()).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

/// Identification written at the top of every emitted file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileHeader {
    pub tool_version: String,
    pub experiment: String,
    pub seed: u64,
    pub config_hash: String,
}

impl FileHeader {
    pub fn comment_lines(&self) -> String {
        format!(
            "# bbmx {}\n# experiment={} seed={} config_hash={}\n",
            self.tool_version, self.experiment, self.seed, self.config_hash
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Largest per-replica bound on the bias introduced by pruning.
    pub prune_bias_bound: f64,
    /// Largest documented truncation bound of any sampler used.
    pub truncation_bound: f64,
    pub regime_warnings: usize,
    pub notes: Vec<String>,
}

impl Diagnostics {
    pub fn absorb(&mut self, other: &Diagnostics) {
        self.prune_bias_bound = self.prune_bias_bound.max(other.prune_bias_bound);
        self.truncation_bound = self.truncation_bound.max(other.truncation_bound);
        self.regime_warnings += other.regime_warnings;
        self.notes.extend(other.notes.iter().cloned());
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub file: String,
    pub sha256: String,
}

/// Everything known about one run. Written as one JSON line to `runs.jsonl`;
/// wall times make it the only non-deterministic artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub experiment: String,
    pub config_hash: String,
    pub config: String,
    pub tool_version: String,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub seed: u64,
    pub replicas: usize,
    pub workers: usize,
    /// Per-replica summary rows.
    pub summary: Table,
    /// Further tables written next to the summary.
    pub extra: Vec<Table>,
    pub diagnostics: Diagnostics,
    pub reports: Vec<ComparisonReport>,
    pub files: Vec<FileDigest>,
}

impl RunRecord {
    pub fn header(&self) -> FileHeader {
        FileHeader {
            tool_version: self.tool_version.clone(),
            experiment: self.experiment.clone(),
            seed: self.seed,
            config_hash: self.config_hash.clone(),
        }
    }

    pub fn all_pass(&self) -> bool {
        self.reports.iter().all(|r| r.pass)
    }
}

pub fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Output {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `contents` to `dir/name` and returns its digest.
pub fn write_file(dir: &Path, name: &str, contents: &str) -> CliResult<FileDigest> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let path: PathBuf = dir.join(name);
    fs::write(&path, contents).map_err(io_err(&path))?;
    Ok(FileDigest {
        file: name.to_string(),
        sha256: sha256_hex(contents.as_bytes()),
    })
}

/// Verification report as JSONL: a header object, then one report per line.
pub fn reports_jsonl(header: &FileHeader, reports: &[ComparisonReport]) -> CliResult<String> {
    let mut out = serde_json::to_string(&serde_json::json!({ "header": header }))
        .map_err(|e| CliError::Config(e.to_string()))?;
    out.push('\n');
    for r in reports {
        out.push_str(&serde_json::to_string(r).map_err(|e| CliError::Config(e.to_string()))?);
        out.push('\n');
    }
    Ok(out)
}

/// Appends the record as one line to `dir/runs.jsonl`.
pub fn append_record(dir: &Path, record: &RunRecord) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let path = dir.join("runs.jsonl");
    let line = serde_json::to_string(record).map_err(|e| CliError::Config(e.to_string()))?;
    let mut f = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&path)
        .map_err(io_err(&path))?;
    writeln!(f, "{line}").map_err(io_err(&path))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header() -> FileHeader {
        FileHeader {
            tool_version: "0.1.0".into(),
            experiment: "demo".into(),
            seed: 9,
            config_hash: "abc".into(),
        }
    }

    #[test]
    fn csv_layout() {
        let mut t = Table::new("demo", &["i", "x", "label"]);
        t.push(vec![1usize.into(), 0.1.into(), "a,b".into()]);
        t.push(vec![2usize.into(), 1e-300.into(), "plain".into()]);
        let csv = t.to_csv(&header());
        assert_eq!(
            csv,
            "# bbmx 0.1.0\n# experiment=demo seed=9 config_hash=abc\ni,x,label\n1,0.1,\"a,b\"\n2,1e-300,plain\n"
        );
        assert!(!csv.contains('\r'));
        assert_eq!(t.column("x").unwrap(), vec![0.1, 1e-300]);
        assert!(t.column("nope").is_err());
    }

    #[test]
    fn reals_round_trip_through_csv_text() {
        for x in [0.1 + 0.2, std::f64::consts::PI, -1.5e-12, 123456789.125, 4.2e22, f64::MIN_POSITIVE] {
            let s = Cell::Real(x).to_string();
            assert_eq!(s.parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn jsonl_reports_start_with_header() {
        let r = ComparisonReport::at_most("c", "s", 0.1, 0.2, vec![10]);
        let text = reports_jsonl(&header(), &[r]).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[0].contains("\"config_hash\":\"abc\""));
        assert!(lines[1].contains("\"pass\":true"));
    }
}
