//! `templates make` and `templates inspect`.

use std::fmt::Write as _;
use std::path::Path;

use bias_lab::io::{load_templates, save_templates, LoadOptions, SaveFormat, TemplateFormat};
use bias_lab::templates::{make_circulant, make_exponential, make_haar_family, make_pair, make_random};
use bias_lab::TemplateSet;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Pair,
    Circulant,
    Haar,
    Random,
}

impl std::str::FromStr for Kind {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "pair" => Kind::Pair,
            "circulant" => Kind::Circulant,
            "haar" => Kind::Haar,
            "random" => Kind::Random,
            other => {
                return Err(CliError::Config(format!(
                    "kind must be pair, circulant, haar or random, got `{other}`"
                )))
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MakeSpec {
    pub kind: Kind,
    pub d: usize,
    pub l: usize,
    pub norm: f64,
    /// Pair correlation, or the largest `|ρ|` for random sets.
    pub rho: f64,
    pub rho_seq: Vec<f64>,
    /// Decay of the exponential base template for Haar families.
    pub alpha: f64,
    pub seed: u64,
}

pub fn make(spec: &MakeSpec) -> Result<TemplateSet> {
    Ok(match spec.kind {
        Kind::Pair => make_pair(spec.rho, spec.d, spec.norm)?,
        Kind::Circulant => make_circulant(&spec.rho_seq, spec.d, spec.norm)?,
        Kind::Haar => make_haar_family(&make_exponential(spec.d, spec.alpha, spec.norm)?, spec.l, spec.seed)?,
        Kind::Random => make_random(spec.l, spec.d, spec.rho, spec.norm, spec.seed)?,
    })
}

/// Saves as CSV, or as a directory of PGM images when `shape` is given.
pub fn save(set: &TemplateSet, path: &Path, shape: Option<(usize, usize)>) -> Result<()> {
    let format = match shape {
        Some((width, height)) => SaveFormat::Pgm { width, height },
        None => SaveFormat::Csv { header: false },
    };
    save_templates(set, path, format).map_err(|e| CliError::output(path, e))
}

/// Loads a CSV file or a PGM directory without rescaling.
pub fn load(path: &Path, header: bool) -> Result<TemplateSet> {
    let format = if path.is_dir() { TemplateFormat::Pgm } else { TemplateFormat::Csv };
    let opts = LoadOptions {
        header,
        normalize: false,
        subtract_mean: false,
        ..LoadOptions::default()
    };
    Ok(load_templates(path, format, &opts)?)
}

/// `L`, `d`, the common norm, and the correlation matrix.
pub fn inspect(set: &TemplateSet) -> Result<String> {
    let mut s = String::new();
    let _ = writeln!(s, "L = {}", set.len());
    let _ = writeln!(s, "d = {}", set.dim());
    let _ = writeln!(s, "norm = {}", set.norm());
    let g = set.gram()?;
    let _ = writeln!(s, "circulant = {}", g.is_circulant(1e-9));
    let _ = writeln!(s, "rho =");
    for i in 0..set.len() {
        let row: Vec<String> = (0..set.len()).map(|k| format!("{:.6}", g.rho()[(i, k)])).collect();
        let _ = writeln!(s, "  {}", row.join(", "));
    }
    Ok(s)
}
