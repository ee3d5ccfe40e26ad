//! Check rows, tables, and their CSV form.

use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use crate::error::{CliError, Result};

/// How `measured` is compared with `reference`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    /// `|measured − reference| ≤ tolerance`.
    Within,
    /// `measured − reference > tolerance`.
    Above,
    /// `reference − measured > tolerance`.
    Below,
    /// `|measured − reference| ≤ tolerance · |reference|`.
    Relative,
    /// Reported only; never fails.
    Info,
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Relation::Within => "abs_diff<=tol",
            Relation::Above => "diff>tol",
            Relation::Below => "-diff>tol",
            Relation::Relative => "rel_diff<=tol",
            Relation::Info => "info",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub experiment: String,
    pub case: String,
    pub quantity: String,
    pub unit: String,
    pub measured: f64,
    pub stderr: f64,
    pub reference: f64,
    pub reference_bound: f64,
    pub relation: Relation,
    pub tolerance: f64,
    /// Theory formula id, oracle method, or `engine` for cross-run checks.
    pub provenance: String,
}

impl Row {
    pub fn new(experiment: &str, case: impl Into<String>, quantity: impl Into<String>) -> Self {
        Row {
            experiment: experiment.to_string(),
            case: case.into(),
            quantity: quantity.into(),
            unit: "norm^2".into(),
            measured: f64::NAN,
            stderr: 0.0,
            reference: f64::NAN,
            reference_bound: 0.0,
            relation: Relation::Info,
            tolerance: f64::NAN,
            provenance: String::new(),
        }
    }

    pub fn unit(mut self, unit: &str) -> Self {
        self.unit = unit.into();
        self
    }

    pub fn measured(mut self, value: f64, stderr: f64) -> Self {
        self.measured = value;
        self.stderr = stderr;
        self
    }

    pub fn reference(mut self, value: f64, bound: f64, provenance: impl Into<String>) -> Self {
        self.reference = value;
        self.reference_bound = bound;
        self.provenance = provenance.into();
        self
    }

    pub fn check(mut self, relation: Relation, tolerance: f64) -> Self {
        self.relation = relation;
        self.tolerance = tolerance;
        self
    }

    pub fn passed(&self) -> bool {
        let diff = self.measured - self.reference;
        match self.relation {
            Relation::Within => diff.abs() <= self.tolerance,
            Relation::Above => diff > self.tolerance,
            Relation::Below => -diff > self.tolerance,
            Relation::Relative => diff.abs() <= self.tolerance * self.reference.abs(),
            Relation::Info => true,
        }
    }

    pub fn status(&self) -> &'static str {
        match (self.relation, self.passed()) {
            (Relation::Info, _) => "info",
            (_, true) => "pass",
            (_, false) => "FAIL",
        }
    }

    pub const HEADER: &'static str = "experiment,case,quantity,unit,measured,stderr,reference,reference_bound,relation,tolerance,provenance,status";

    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            field(&self.experiment),
            field(&self.case),
            field(&self.quantity),
            field(&self.unit),
            self.measured,
            self.stderr,
            self.reference,
            self.reference_bound,
            self.relation,
            self.tolerance,
            field(&self.provenance),
            self.status()
        )
    }
}

/// Quotes a CSV field when needed.
fn field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// A free-form table; `header` names every column and its unit.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Table {
            name: name.into(),
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn csv(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for r in &self.rows {
            let cells: Vec<String> = r.iter().map(|c| field(c)).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }
}

/// Everything one experiment produced.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Outcome {
    pub rows: Vec<Row>,
    pub tables: Vec<Table>,
    /// Files written directly by the experiment (images).
    pub artifacts: Vec<PathBuf>,
}

impl Outcome {
    pub fn extend(&mut self, other: Outcome) {
        self.rows.extend(other.rows);
        self.tables.extend(other.tables);
        self.artifacts.extend(other.artifacts);
    }

    pub fn failures(&self) -> impl Iterator<Item = &Row> {
        self.rows.iter().filter(|r| !r.passed())
    }

    pub fn all_passed(&self) -> bool {
        self.failures().next().is_none()
    }
}

pub fn rows_csv(rows: &[Row]) -> String {
    let mut s = String::from(Row::HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r.csv());
        s.push('\n');
    }
    s
}

/// Result of `run` or `verify`: the echoed configuration, the outcome, the
/// files written, and the wall time (kept out of every CSV).
#[derive(Debug, Clone)]
pub struct RunReport {
    pub title: String,
    pub config_echo: String,
    pub outcome: Outcome,
    pub files: Vec<PathBuf>,
    pub wall_time: Duration,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.outcome.all_passed()
    }

    pub fn exit_code(&self) -> i32 {
        if self.passed() {
            crate::error::exit::PASS
        } else {
            crate::error::exit::FAILED_ROWS
        }
    }

    /// Writes `<stem>.csv` with every check row and `<stem>_<table>.csv` per
    /// table into `dir`.
    pub fn write_csv(&mut self, dir: &Path, stem: &str) -> Result<()> {
        let checks = dir.join(format!("{stem}.csv"));
        write(&checks, &rows_csv(&self.outcome.rows))?;
        self.files.push(checks);
        for t in &self.outcome.tables {
            let p = dir.join(format!("{stem}_{}.csv", t.name));
            write(&p, &t.csv())?;
            self.files.push(p);
        }
        self.files.extend(self.outcome.artifacts.iter().cloned());
        Ok(())
    }

    pub fn text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# {}", self.title);
        let _ = writeln!(s, "## config");
        s.push_str(&self.config_echo);
        let _ = writeln!(s, "## checks");
        for r in &self.outcome.rows {
            let _ = writeln!(
                s,
                "{:4} {} [{}] {}: measured {:.6} ± {:.2e}, reference {:.6} ± {:.2e} ({}), {} {:.3e}",
                r.status(),
                r.experiment,
                r.case,
                r.quantity,
                r.measured,
                r.stderr,
                r.reference,
                r.reference_bound,
                r.provenance,
                r.relation,
                r.tolerance
            );
        }
        let total = self.outcome.rows.len();
        let failed = self.outcome.failures().count();
        let _ = writeln!(s, "## summary");
        let _ = writeln!(s, "{} rows, {} failed", total, failed);
        for f in &self.files {
            let _ = writeln!(s, "artifact {}", f.display());
        }
        let _ = writeln!(s, "wall_time_s {:.3}", self.wall_time.as_secs_f64());
        s
    }
}

pub(crate) fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| CliError::output(path, e))
}

pub(crate) fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::output(dir, e))?;
    let probe = dir.join(".bias-lab-write-test");
    fs::write(&probe, b"").map_err(|e| CliError::output(dir, e))?;
    let _ = fs::remove_file(probe);
    Ok(())
}
