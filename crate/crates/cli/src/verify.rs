//! Fixed suites of experiments covering every invariant.

use crate::config::Config;
use crate::error::{CliError, Result};
use crate::experiments::{run_experiment, Context};
use crate::report::Outcome;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    /// `M ≤ 10⁶`, `L ≤ 64`.
    Fast,
    /// `M` up to `10⁷`, the `L = 4096` sweep and oracle agreement rows.
    Full,
}

impl std::str::FromStr for Suite {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fast" => Ok(Suite::Fast),
            "full" => Ok(Suite::Full),
            other => Err(CliError::Config(format!("suite must be `fast` or `full`, got `{other}`"))),
        }
    }
}

impl Suite {
    pub fn name(self) -> &'static str {
        match self {
            Suite::Fast => "fast",
            Suite::Full => "full",
        }
    }

    /// The experiment configurations, without seeds.
    pub fn configs(self) -> Vec<&'static str> {
        match self {
            Suite::Fast => vec![
                "experiment = pair_hard\nM = 1e6",
                "experiment = pair_soft\nM = 1e6",
                "experiment = beta_large\nM = 1e6",
                "experiment = beta_small\nM = 1e6",
                "experiment = random_sets\nsets = 20\nM = 2e5",
                "experiment = average_dependency\nM = 1e6",
                "experiment = individual_dependency\nM = 1e6",
                "experiment = span\nM = 1e4, 1e6",
                "experiment = finite_l\nM = 1e6",
                "experiment = gumbel_sweep\nL = 16, 64\nM = 1e6",
                "experiment = oracle_checks",
            ],
            Suite::Full => vec![
                "experiment = pair_hard\nM = 1e7",
                "experiment = pair_soft\nM = 1e7",
                "experiment = beta_large\nM = 1e6",
                "experiment = beta_small\nM = 1e7",
                "experiment = random_sets\nsets = 50\nM = 1e6",
                "experiment = oracle_agreement\nsets = 20\nM = 1e6",
                "experiment = average_dependency\nM = 1e7",
                "experiment = individual_dependency\nM = 1e7",
                "experiment = span\nM = 1e4, 1e6",
                "experiment = finite_l\nM = 1e7",
                "experiment = gumbel_sweep\nL = 16, 64, 256, 1024, 4096\nM = 1e6",
                "experiment = soft_asymptotic\nL = 256\nM = 1e7",
                "experiment = oracle_checks",
            ],
        }
    }
}

pub const DEFAULT_SEED: u64 = 2024;

/// Runs every experiment of `suite` with `seed` (overridden by the seed
/// environment variable) and returns the echoed configurations and the
/// combined outcome.
pub fn run_suite(suite: Suite, seed: u64, ctx: &Context) -> Result<(String, Outcome)> {
    let mut echo = String::new();
    let mut all = Outcome::default();
    for text in suite.configs() {
        let mut c = Config::parse(text)?;
        c.set("seed", &seed.to_string());
        c.apply_env()?;
        echo.push_str(&c.echo());
        echo.push('\n');
        all.extend(run_experiment(c.experiment()?, &c, ctx)?);
    }
    Ok((echo, all))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suites_parse_and_name_known_experiments() {
        for s in [Suite::Fast, Suite::Full] {
            for text in s.configs() {
                let c = Config::parse(text).unwrap();
                assert!(crate::experiments::EXPERIMENTS.contains(&c.experiment().unwrap()));
            }
        }
        assert_eq!("fast".parse::<Suite>().unwrap(), Suite::Fast);
        assert!("slow".parse::<Suite>().is_err());
    }

    #[test]
    fn fast_suite_respects_limits() {
        for text in Suite::Fast.configs() {
            let c = Config::parse(text).unwrap();
            assert!(c.samples_list(vec![1]).unwrap().iter().all(|&m| m <= 1_000_000));
            assert!(c.list_or::<usize>("L", vec![2]).unwrap().iter().all(|&l| l <= 64));
        }
    }
}
