//! Experiment harness: dataset generation, training runs for all five
//! algorithms, ablations and report emission. Every run writes a timestamped
//! directory with a config snapshot, the seeds used, checkpoints and metrics
//! CSVs; identical config + seed reproduce the CSVs bitwise.

mod commands;
mod config;
mod report;
mod runs;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

/// Exit code 1; a problem with the configuration or the invocation.
/// Exit code 2; a failure while running.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
}

impl From<cameron::Error> for CliError {
    fn from(e: cameron::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

#[derive(Parser)]
#[command(name = "cameron-cli", version, about)]
struct Cli {
    /// TOML configuration file; omitted sections use the defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override a configuration value, e.g. --set cameron.iterations=10.
    #[arg(long = "set", global = true, value_name = "SECTION.KEY=VALUE")]
    overrides: Vec<String>,

    /// Root directory for run artifacts; falls back to $CAMERON_RUNS_DIR,
    /// then ./runs.
    #[arg(long, global = true)]
    out_root: Option<PathBuf>,

    /// Base random seed.
    #[arg(long, global = true, default_value_t = 7)]
    seed: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the expert/medium/random dataset tiers and save them.
    GenData,
    /// Conservative offline RL against the true environment cost.
    TrainCombo(DataArgs),
    /// The full loop: occupancy estimation, future sampling, conservative
    /// policy steps and adversarial cost updates.
    TrainCameron(DataArgs),
    /// Positive-unlabelled cost baseline, then offline RL on the result.
    TrainOril(DataArgs),
    /// Time-guided cost baseline, then offline RL on the result.
    TrainTgr(DataArgs),
    /// Behaviour cloning on the expert data.
    TrainBc(DataArgs),
    /// Generator-quality curves against exact occupancies.
    EvalMmd(DataArgs),
    /// The full loop across future-sample mixture settings.
    AblateMixture(DataArgs),
    /// The full loop across exploration-data compositions.
    AblateDataDiversity,
    /// Aggregate run summaries into one report CSV.
    Report(ReportArgs),
}

#[derive(clap::Args)]
struct DataArgs {
    /// Directory written by gen-data; datasets are generated in-memory when
    /// omitted.
    #[arg(long)]
    data_dir: Option<PathBuf>,
}

#[derive(clap::Args)]
struct ReportArgs {
    /// Run directories holding summary.csv files.
    run_dirs: Vec<PathBuf>,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

const SUBCOMMANDS: &str = "gen-data, train-combo, train-cameron, train-oril, train-tgr, \
     train-bc, eval-mmd, ablate-mixture, ablate-data-diversity, report";

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{e}");
            eprintln!("valid subcommands: {SUBCOMMANDS}");
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(m)) => {
            eprintln!("config error: {m}");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = config::load_config(cli.config.as_deref(), &cli.overrides)?;
    let root = cli
        .out_root
        .or_else(|| std::env::var_os("CAMERON_RUNS_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs"));
    let ctx = commands::Context {
        cfg,
        root,
        seed: cli.seed,
    };
    match cli.command {
        Command::GenData => commands::gen_data(&ctx),
        Command::TrainCombo(a) => commands::train_combo(&ctx, a.data_dir.as_deref()),
        Command::TrainCameron(a) => commands::train_cameron(&ctx, a.data_dir.as_deref()),
        Command::TrainOril(a) => commands::train_baseline(&ctx, a.data_dir.as_deref(), true),
        Command::TrainTgr(a) => commands::train_baseline(&ctx, a.data_dir.as_deref(), false),
        Command::TrainBc(a) => commands::train_bc(&ctx, a.data_dir.as_deref()),
        Command::EvalMmd(a) => commands::eval_mmd(&ctx, a.data_dir.as_deref()),
        Command::AblateMixture(a) => commands::ablate_mixture(&ctx, a.data_dir.as_deref()),
        Command::AblateDataDiversity => commands::ablate_data_diversity(&ctx),
        Command::Report(a) => report::emit_report(&a.run_dirs, &a.out),
    }
}
