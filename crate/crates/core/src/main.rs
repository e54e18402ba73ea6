use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use num_rational::BigRational;

use ratdup::cli::{self, BoundsGrid, CommandOutput, Flags, TableFormat, EXIT_CONFIG, OUT_DIR_ENV};
use ratdup::scenario::Scenario;

#[derive(Parser)]
#[command(name = "ratdup", version)]
#[command(about = "Simulate synchronous protocols with rational, self-duplicating agents")]
struct Cli {
    /// Worker threads for the estimators (default: all cores)
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Debug, Default)]
struct CommonFlags {
    /// Override the scenario seed
    #[arg(long)]
    seed: Option<u64>,
    /// Seeded runs (or Monte Carlo samples) instead of the scenario setting
    #[arg(long, conflicts_with = "enumerate")]
    trials: Option<u64>,
    /// Enumerate every branch of the randomness
    #[arg(long)]
    enumerate: bool,
    /// Output directory
    #[arg(long, env = OUT_DIR_ENV)]
    out: Option<PathBuf>,
}

impl From<CommonFlags> for Flags {
    fn from(f: CommonFlags) -> Self {
        Flags {
            seed: f.seed,
            trials: f.trials,
            enumerate: f.enumerate,
            out: f.out,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Csv,
    Markdown,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a scenario; exit 0 when every run is legal, 2 otherwise
    Run {
        scenario: PathBuf,
        #[command(flatten)]
        flags: CommonFlags,
    },
    /// Check the scenario's deviation catalog; exit 3 on a profitable deviation
    CheckEquilibrium {
        scenario: PathBuf,
        #[command(flatten)]
        flags: CommonFlags,
    },
    /// Print the bound classification and the sharing incentive grid
    BoundsTable {
        #[arg(long, default_value_t = 3)]
        alpha_min: usize,
        #[arg(long, default_value_t = 8)]
        alpha_max: usize,
        #[arg(long, default_value_t = 16)]
        beta_max: usize,
        /// Output ranges to sweep
        #[arg(long, value_delimiter = ',', default_values_t = [2u64, 3, 4, 10])]
        k: Vec<u64>,
        /// Payoffs of a successful duplication, as fractions
        #[arg(long, value_delimiter = ',', default_values = ["1/2", "1"])]
        x: Vec<String>,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Compare the scenario's cheater against honest play; exit 3 when it pays
    AttackDemo {
        /// Defaults to a four-agent sharing ring attacked by a five-agent segment
        scenario: Option<PathBuf>,
        #[command(flatten)]
        flags: CommonFlags,
    },
}

fn load(path: &std::path::Path) -> Result<Scenario> {
    Scenario::load(path).with_context(|| format!("loading {}", path.display()))
}

fn parse_fraction(s: &str) -> Result<BigRational> {
    s.trim()
        .parse::<BigRational>()
        .map_err(|e| anyhow::anyhow!("bad fraction {s:?}: {e}"))
}

fn dispatch(cli: Cli) -> Result<CommandOutput> {
    if let Some(j) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build_global()
            .context("configuring worker threads")?;
    }
    match cli.command {
        Command::Run { scenario, flags } => cli::cmd_run(&load(&scenario)?, &flags.into()),
        Command::CheckEquilibrium { scenario, flags } => {
            cli::cmd_check_equilibrium(&load(&scenario)?, &flags.into())
        }
        Command::BoundsTable {
            alpha_min,
            alpha_max,
            beta_max,
            k,
            x,
            format,
        } => {
            let grid = BoundsGrid {
                alpha_min,
                alpha_max,
                beta_max,
                ks: k,
                xs: x.iter().map(|s| parse_fraction(s)).collect::<Result<_>>()?,
            };
            let format = match format {
                Format::Csv => TableFormat::Csv,
                Format::Markdown => TableFormat::Markdown,
            };
            cli::cmd_bounds_table(&grid, format)
        }
        Command::AttackDemo { scenario, flags } => {
            let scn = match scenario {
                Some(p) => load(&p)?,
                None => Scenario::from_toml_str(cli::DEFAULT_ATTACK)?,
            };
            cli::cmd_attack_demo(&scn, &flags.into())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_CONFIG as u8)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match dispatch(cli) {
        Ok(out) => {
            print!("{}", out.text);
            for f in &out.files {
                eprintln!("wrote {}", f.display());
            }
            ExitCode::from(out.code as u8)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_CONFIG as u8)
        }
    }
}
