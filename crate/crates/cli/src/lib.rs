//! Config-driven experiment runner and verification harness.

pub mod config;
pub mod error;
pub mod experiments;
pub mod report;
pub mod templates_cmd;
pub mod verify;

use std::path::{Path, PathBuf};
use std::time::Instant;

pub use config::Config;
pub use error::{exit, CliError, Result};
pub use experiments::{run_experiment, Context, EXPERIMENTS};
pub use report::{Outcome, Relation, Row, RunReport, Table};
pub use verify::Suite;

pub const DEFAULT_OUT_DIR: &str = "bias-lab-out";

/// Runs the experiment named in the configuration file. `out` overrides the
/// configured `out_dir`. Writes `<experiment>.csv`, any tables, and
/// `report.txt` (which holds the wall time).
pub fn run(config_path: &Path, out: Option<&Path>) -> Result<RunReport> {
    let mut c = Config::load(config_path)?;
    c.apply_env()?;
    let name = c.experiment()?.to_string();
    if !EXPERIMENTS.contains(&name.as_str()) {
        return Err(CliError::UnknownExperiment(name));
    }
    let dir = out
        .map(Path::to_path_buf)
        .or_else(|| c.out_dir())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
    report::ensure_dir(&dir)?;
    let start = Instant::now();
    let outcome = run_experiment(&name, &c, &Context { out_dir: dir.clone() })?;
    finish(format!("run {name}"), c.echo(), outcome, start, &dir, &name)
}

/// Runs a verification suite into `out`, writing `verify_<suite>.csv`.
pub fn verify(suite: Suite, seed: u64, out: &Path) -> Result<RunReport> {
    report::ensure_dir(out)?;
    let start = Instant::now();
    let (echo, outcome) = verify::run_suite(suite, seed, &Context { out_dir: out.to_path_buf() })?;
    finish(
        format!("verify {}", suite.name()),
        echo,
        outcome,
        start,
        out,
        &format!("verify_{}", suite.name()),
    )
}

fn finish(title: String, echo: String, outcome: Outcome, start: Instant, dir: &Path, stem: &str) -> Result<RunReport> {
    let mut rep = RunReport {
        title,
        config_echo: echo,
        outcome,
        files: Vec::new(),
        wall_time: Default::default(),
    };
    rep.write_csv(dir, stem)?;
    let text_path = dir.join("report.txt");
    rep.files.push(text_path.clone());
    rep.wall_time = start.elapsed();
    report::write(&text_path, &rep.text())?;
    Ok(rep)
}
