//! `mmbus`: batch front end for the intra-bus 60 GHz path loss toolkit.
//!
//! Exit codes: 0 success, 1 verification failure, 2 input or parse error,
//! 3 insufficient data, 4 ineligible seat request.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod output;

#[derive(Parser)]
#[command(
    name = "mmbus",
    version,
    about = "60 GHz in-bus path loss models, fitting and link budgets"
)]
struct Cli {
    /// Write the primary output here instead of standard output
    #[arg(short, long, global = true)]
    output: Option<PathBuf>,

    /// Output format (each subcommand has its own default)
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,

    /// Seed for every random draw
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Bus layout JSON (defaults to the bundled 30-seat layout)
    #[arg(long, global = true)]
    layout: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum HeightArg {
    Lower,
    Upper,
    Both,
}

#[derive(Subcommand)]
enum Command {
    /// Fit (alpha, beta, sigma) to a sample CSV
    Fit(FitArgs),
    /// Evaluate a model over a distance range (plot-ready CSV)
    Eval(EvalArgs),
    /// Cross-check the pooled models against their combined printed form
    Verify(VerifyArgs),
    /// Reduce a PDP measurement directory to a sample CSV
    Process(ProcessArgs),
    /// Generate synthetic samples or a PDP measurement directory
    Synth(SynthArgs),
    /// Per-seat link budget
    Sweep(SweepArgs),
    /// Monte-Carlo SINR with several transmitters active at once
    Footprint(FootprintArgs),
    /// Mean path loss difference between two models
    Compare(CompareArgs),
    /// Print the built-in model registry as JSON
    Registry,
}

#[derive(Args)]
pub struct FitArgs {
    /// Sample CSV: distance_m,path_loss_db[,seat,region,height]
    pub samples: PathBuf,
    /// Fit every (region, height) cell plus the pooled "All" cell
    #[arg(long)]
    pub by_group: bool,
    /// Fraction trimmed from each residual tail before refitting
    #[arg(long, default_value_t = 0.0)]
    pub trim: f64,
}

#[derive(Args)]
pub struct EvalArgs {
    /// Built-in model ("All/upper", "c-lower") or model JSON file
    #[arg(long)]
    pub model: String,
    /// Distance range start:stop:step in metres, inclusive
    #[arg(long)]
    pub distances: String,
}

#[derive(Args)]
pub struct VerifyArgs {
    /// Model registry JSON to check instead of the built-in one
    #[arg(long)]
    pub registry: Option<PathBuf>,
}

#[derive(Args)]
pub struct ProcessArgs {
    pub measurement_dir: PathBuf,
    /// Calibration JSON: radiated_power_db, g_tx_dbi, g_rx_dbi, noise_threshold_db
    pub calibration: PathBuf,
}

#[derive(Args)]
pub struct SynthArgs {
    /// Model for every seat; built-in name or JSON file
    #[arg(long, conflicts_with = "by_group")]
    pub model: Option<String>,
    /// Use each seat's group model from the registry
    #[arg(long)]
    pub by_group: bool,
    /// Registry JSON used with --by-group (default: built-in)
    #[arg(long, requires = "by_group")]
    pub models: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "upper")]
    pub height: HeightArg,
    /// Drop shadowing (sigma = 0)
    #[arg(long)]
    pub noiseless: bool,
    /// Samples per seat
    #[arg(long, default_value_t = 1)]
    pub repeats: usize,
    /// Write a PDP measurement directory instead of a sample CSV
    #[arg(long, requires = "calibration")]
    pub pdp_dir: Option<PathBuf>,
    #[arg(long)]
    pub calibration: Option<PathBuf>,
    /// Sweeps per measurement set in --pdp-dir mode
    #[arg(long, default_value_t = 10)]
    pub sweeps: usize,
}

#[derive(Args)]
pub struct BudgetArgs {
    /// Link budget JSON (defaults are generic 60 GHz WLAN figures)
    #[arg(long)]
    pub budget: Option<PathBuf>,
    /// Model registry JSON (default: built-in)
    #[arg(long)]
    pub models: Option<PathBuf>,
    /// Use the pooled "All" model for every seat
    #[arg(long)]
    pub pooled: bool,
}

#[derive(Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub budget: BudgetArgs,
    #[arg(long, value_enum, default_value = "upper")]
    pub height: HeightArg,
}

#[derive(Args)]
pub struct FootprintArgs {
    #[command(flatten)]
    pub budget: BudgetArgs,
    #[arg(long, value_enum, default_value = "upper")]
    pub height: HeightArg,
    /// Comma-separated ids of the simultaneously active seats
    #[arg(long, value_delimiter = ',', required = true)]
    pub active: Vec<u32>,
    #[arg(long, default_value_t = 1000)]
    pub draws: usize,
    /// Reuse one shadowing realisation per link for every draw
    #[arg(long)]
    pub frozen: bool,
}

#[derive(Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub a: String,
    /// Reference model, typically a user-supplied JSON file
    #[arg(long)]
    pub b: String,
    #[arg(long)]
    pub distances: String,
}

pub struct Globals {
    pub output: Option<PathBuf>,
    pub format: Option<Format>,
    pub seed: Option<u64>,
    pub layout: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let g = Globals {
        output: cli.output,
        format: cli.format,
        seed: cli.seed,
        layout: cli.layout,
    };
    let result = match cli.command {
        Command::Fit(a) => commands::fit(&g, a),
        Command::Eval(a) => commands::eval(&g, a),
        Command::Verify(a) => commands::verify(&g, a),
        Command::Process(a) => commands::process(&g, a),
        Command::Synth(a) => commands::synth(&g, a),
        Command::Sweep(a) => commands::sweep(&g, a),
        Command::Footprint(a) => commands::footprint(&g, a),
        Command::Compare(a) => commands::compare(&g, a),
        Command::Registry => commands::registry(&g),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mmbus: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
