//! `nugget`: fit and query GP emulators, run simulators and designs, and run
//! replicated nugget vs. no-nugget experiments.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use nugget::Error;

#[derive(Debug, Parser)]
#[command(
    name = "nugget",
    version,
    about = "GP emulation with an estimable nugget"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample the GP posterior for a training CSV and save a model file.
    Fit(FitArgs),
    /// Pooled posterior predictions from a model file.
    Predict(PredictArgs),
    /// Run a catalog simulator on a design.
    Simulate(SimulateArgs),
    /// Generate a design.
    Design(DesignArgs),
    /// Run an experiment described by a JSON config.
    Experiment(ExperimentArgs),
    /// Run one of the canned comparison tables.
    Reproduce(ReproduceArgs),
}

#[derive(Debug, Args)]
struct McmcArgs {
    #[arg(long, default_value_t = 6000)]
    n_iter: usize,
    #[arg(long, default_value_t = 1000)]
    burn: usize,
    #[arg(long, default_value_t = 10)]
    thin: usize,
    /// Standard deviation of the log-scale random-walk proposal.
    #[arg(long, default_value_t = 0.5)]
    proposal_sd: f64,
}

#[derive(Debug, Args)]
struct PriorArgs {
    /// Gamma shape of the prior on each range parameter.
    #[arg(long, default_value_t = 1.5)]
    d_shape: f64,
    #[arg(long, default_value_t = 1.5)]
    d_rate: f64,
    /// Gamma shape of the prior on the nugget.
    #[arg(long, default_value_t = 1.0)]
    g_shape: f64,
    #[arg(long, default_value_t = 10.0)]
    g_rate: f64,
    /// Inverse-Gamma shape of the prior on the scale.
    #[arg(long = "ig-shape", default_value_t = 1.5)]
    a: f64,
    #[arg(long = "ig-scale", default_value_t = 1.5)]
    b: f64,
}

#[derive(Debug, Args)]
struct FitArgs {
    /// Training CSV: header row, input columns, then the response column.
    data: PathBuf,
    /// Model file to write.
    #[arg(short, long)]
    out: PathBuf,
    /// Also write the chain as CSV.
    #[arg(long)]
    chain: Option<PathBuf>,
    /// Fix the nugget at zero (interpolating model).
    #[arg(long)]
    no_nugget: bool,
    /// One range parameter shared by all inputs.
    #[arg(long)]
    isotropic: bool,
    /// Input bounds as lo:hi, one per input (default: data range).
    #[arg(long = "bounds", value_parser = commands::parse_range, allow_hyphen_values = true)]
    bounds: Vec<(f64, f64)>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    mcmc: McmcArgs,
    #[command(flatten)]
    prior: PriorArgs,
}

#[derive(Debug, Args)]
struct PredictArgs {
    model: PathBuf,
    /// CSV of test inputs with the model's input columns.
    #[arg(long, conflicts_with = "grid", required_unless_present = "grid")]
    test: Option<PathBuf>,
    /// Regular grid with this many levels per input over the model's bounds.
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long, default_value_t = 0.9)]
    level: f64,
    /// Predict a new observation (adds the nugget to the predictive variance).
    #[arg(long)]
    include_noise: bool,
    /// Student-t draws per posterior sample for the pooled intervals.
    #[arg(long, default_value_t = 20)]
    draws: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Simulator name (see --list).
    #[arg(required_unless_present = "list")]
    name: Option<String>,
    /// List the catalog and exit.
    #[arg(long)]
    list: bool,
    /// CSV of inputs to evaluate.
    #[arg(long, conflicts_with_all = ["kind", "n"])]
    design: Option<PathBuf>,
    /// Generate a design of this kind over the simulator's domain.
    #[arg(long)]
    kind: Option<String>,
    /// Number of design points (a grid needs a perfect power of the dimension).
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV (default: standard output).
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DesignArgs {
    /// uniform, lhs or grid.
    kind: String,
    /// Number of points.
    n: usize,
    /// Coordinate range as lo:hi, once per dimension.
    #[arg(long = "domain", value_parser = commands::parse_range, allow_hyphen_values = true)]
    domain: Vec<(f64, f64)>,
    /// Take the domain from a catalog simulator instead.
    #[arg(long, conflicts_with = "domain")]
    simulator: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    /// JSON experiment config.
    config: PathBuf,
    /// Directory for raw, summary and plot CSVs.
    #[arg(long)]
    out_dir: PathBuf,
    /// Worker threads (overrides the config).
    #[arg(long, env = "NUGGET_WORKERS")]
    workers: Option<usize>,
}

#[derive(Debug, Args)]
struct ReproduceArgs {
    /// fig1, fig2, table1_exp, table1_fried or table2.
    table: String,
    /// Fraction of the full replicate count (default 0.1 for fig1, else 1).
    #[arg(long)]
    scale: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, env = "NUGGET_WORKERS")]
    workers: Option<usize>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Fit(a) => commands::fit(a),
        Command::Predict(a) => commands::predict(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Design(a) => commands::design(a),
        Command::Experiment(a) => commands::experiment(a),
        Command::Reproduce(a) => commands::reproduce(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        // reader went away (e.g. piped into `head`)
        Err(Error::Io(e)) if e.kind() == std::io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    if e.is_numerical() {
        2
    } else {
        1
    }
}
