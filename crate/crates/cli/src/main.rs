use std::path::PathBuf;
use std::process::ExitCode;

use bias_lab_cli::templates_cmd::{self, Kind, MakeSpec};
use bias_lab_cli::{exit, verify, CliError, RunReport, Suite};
use clap::{Parser, Subcommand};

/// Simulate assignment-based template averaging and check it against theory.
///
/// Exit codes: 0 all rows pass, 1 some row failed, 2 unknown experiment,
/// 3 invalid configuration, 4 unwritable output directory.
#[derive(Parser)]
#[command(name = "bias-lab", version)]
struct Cli {
    /// Worker threads (default: all cores). Never changes results.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides `out_dir`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a verification suite.
    Verify {
        #[arg(long, default_value = "fast")]
        suite: String,
        #[arg(long, default_value_t = bias_lab_cli::verify::DEFAULT_SEED)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate or inspect template sets.
    Templates {
        #[command(subcommand)]
        action: TemplatesAction,
    },
}

#[derive(Subcommand)]
enum TemplatesAction {
    /// Generate a template set and save it as CSV (or PGM images with
    /// --width/--height).
    Make {
        /// pair, circulant, haar or random
        #[arg(long)]
        kind: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 64)]
        d: usize,
        #[arg(long, short = 'l', default_value_t = 4)]
        templates: usize,
        #[arg(long, default_value_t = 1.0)]
        norm: f64,
        /// Pair correlation, or the largest |rho| for random sets.
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        rho: f64,
        /// Circulant first row, comma separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        rho_seq: Vec<f64>,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, requires = "height")]
        width: Option<usize>,
        #[arg(long, requires = "width")]
        height: Option<usize>,
    },
    /// Print L, d, norm and the correlation matrix of a CSV file or PGM
    /// directory.
    Inspect {
        path: PathBuf,
        #[arg(long)]
        header: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(exit::INVALID_CONFIG as u8);
        }
    }
    let code = match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}

fn report(rep: &RunReport) -> i32 {
    print!("{}", rep.text());
    for r in rep.outcome.failures() {
        eprintln!("FAILED: {}", r.csv());
    }
    rep.exit_code()
}

fn execute(cmd: Command) -> Result<i32, CliError> {
    match cmd {
        Command::Run { config, out } => Ok(report(&bias_lab_cli::run(&config, out.as_deref())?)),
        Command::Verify { suite, seed, out } => {
            let suite: Suite = suite.parse()?;
            let out = out.unwrap_or_else(|| PathBuf::from(format!("verify-{}", suite.name())));
            Ok(report(&verify(suite, seed, &out)?))
        }
        Command::Templates { action } => match action {
            TemplatesAction::Make {
                kind,
                out,
                d,
                templates,
                norm,
                rho,
                rho_seq,
                alpha,
                seed,
                width,
                height,
            } => {
                let spec = MakeSpec {
                    kind: kind.parse::<Kind>()?,
                    d,
                    l: templates,
                    norm,
                    rho,
                    rho_seq,
                    alpha,
                    seed,
                };
                let set = templates_cmd::make(&spec)?;
                templates_cmd::save(&set, &out, width.zip(height))?;
                print!("{}", templates_cmd::inspect(&set)?);
                Ok(exit::PASS)
            }
            TemplatesAction::Inspect { path, header } => {
                print!("{}", templates_cmd::inspect(&templates_cmd::load(&path, header)?)?);
                Ok(exit::PASS)
            }
        },
    }
}
