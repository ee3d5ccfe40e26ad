//! Flat `key = value` experiment configuration.
//!
//! Blank lines and text after `#` are ignored. Lists are comma separated.
//! Keys are case sensitive; unknown keys are rejected.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{CliError, Result};

pub const SEED_ENV: &str = "BIAS_LAB_SEED";

pub const KEYS: &[&str] = &[
    "experiment",
    "L",
    "d",
    "M",
    "mode",
    "beta",
    "seed",
    "chunks",
    "norm",
    "rho",
    "rho_seq",
    "rho_seq_hi",
    "alpha",
    "template_dir",
    "template_csv",
    "out_dir",
    "tol",
    "sets",
    "max_rho",
    "ratio_tol",
    "width",
    "height",
];

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Config {
    entries: Vec<(String, String)>,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Config::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries: Vec<(String, String)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected `key = value`", i + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if !KEYS.contains(&k) {
                return Err(CliError::Config(format!("line {}: unknown key `{k}`", i + 1)));
            }
            if entries.iter().any(|(e, _)| e == k) {
                return Err(CliError::Config(format!("line {}: duplicate key `{k}`", i + 1)));
            }
            entries.push((k.to_string(), v.to_string()));
        }
        Ok(Config { entries })
    }

    /// Replaces `seed` with `BIAS_LAB_SEED` when that is set.
    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            v.trim()
                .parse::<u64>()
                .map_err(|_| CliError::Config(format!("{SEED_ENV} must be an unsigned integer, got `{v}`")))?;
            self.set("seed", v.trim());
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) {
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(e) => e.1 = value.to_string(),
            None => self.entries.push((key.to_string(), value.to_string())),
        }
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn experiment(&self) -> Result<&str> {
        self.raw("experiment")
            .ok_or_else(|| CliError::Config("missing key `experiment`".into()))
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.raw(key).map(|v| parse_value(key, v)).transpose()
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        self.raw(key)
            .map(|v| v.split(',').map(|x| parse_value(key, x.trim())).collect())
            .transpose()
    }

    pub fn list_or<T: FromStr>(&self, key: &str, default: Vec<T>) -> Result<Vec<T>> {
        Ok(self.list(key)?.unwrap_or(default))
    }

    /// `M` accepts integers and scientific notation such as `1e6`.
    pub fn samples(&self, default: u64) -> Result<u64> {
        match self.raw("M") {
            None => Ok(default),
            Some(v) => count("M", v),
        }
    }

    pub fn samples_list(&self, default: Vec<u64>) -> Result<Vec<u64>> {
        match self.raw("M") {
            None => Ok(default),
            Some(v) => v.split(',').map(|x| count("M", x.trim())).collect(),
        }
    }

    pub fn seed(&self) -> Result<u64> {
        self.get_or("seed", 0)
    }

    /// `inf` (or no `beta` key) selects hard assignment.
    pub fn beta(&self, default: f64) -> Result<f64> {
        let b = self.get_or("beta", default)?;
        if b.is_nan() || b <= 0.0 {
            return Err(CliError::Config(format!("beta must be positive, got {b}")));
        }
        Ok(b)
    }

    pub fn out_dir(&self) -> Option<PathBuf> {
        self.raw("out_dir").map(PathBuf::from)
    }

    /// The configuration as it would be written back to a file.
    pub fn echo(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }
}

fn parse_value<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| CliError::Config(format!("cannot parse `{v}` for key `{key}`")))
}

fn count(key: &str, v: &str) -> Result<u64> {
    if let Ok(n) = v.parse::<u64>() {
        return Ok(n);
    }
    let f: f64 = parse_value(key, v)?;
    if f >= 1.0 && f.fract() == 0.0 && f <= 1e15 {
        Ok(f as u64)
    } else {
        Err(CliError::Config(format!("`{key}` must be a positive integer, got `{v}`")))
    }
}
