//! Batch front-end for the cooperative precoder feedback simulator.
//!
//! Provides:
//! - `run`: execute a TOML scenario and emit per-scheme metrics
//! - `preset`: canned sweeps (blockage, power, feedback bits, exchange bits,
//!   bit-partition table, bound curves, quick self-validation)
//! - `bounds`: closed-form leakage bound curves over a parameter grid
//! - `partition`: solve and print the D2D bit partition for a scenario
//!
//! Exit codes: 0 success, 1 configuration or usage error, 2 numerical
//! failure during a run.

mod grid;
mod output;
mod presets;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

use coopfb::config::RawConfig;
use coopfb::error::Error;
use coopfb::sim::ScenarioConfig;

/// Environment variable supplying the default worker count.
pub const PARALLEL_ENV: &str = "COOPFB_PARALLEL";

#[derive(Parser)]
#[command(
    name = "coopfb",
    version,
    about = "Cooperative precoder feedback simulator",
    disable_help_subcommand = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scenario described by a TOML config file.
    Run(RunArgs),
    /// Run a canned experiment preset.
    Preset(PresetArgs),
    /// Evaluate closed-form leakage bounds over a parameter grid.
    Bounds(BoundsArgs),
    /// Solve the D2D exchange bit partition for a scenario.
    Partition(PartitionArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct RunArgs {
    /// Path to the scenario TOML file.
    #[arg(long)]
    config: PathBuf,
    /// Output path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the trial count.
    #[arg(long)]
    trials: Option<u64>,
    /// Worker threads (0 = auto); defaults to $COOPFB_PARALLEL.
    #[arg(long)]
    parallel: Option<usize>,
}

#[derive(Args)]
struct PresetArgs {
    /// Preset name.
    #[arg(value_enum)]
    name: presets::PresetName,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the per-point trial count.
    #[arg(long)]
    trials: Option<u64>,
    /// Worker threads (0 = auto); defaults to $COOPFB_PARALLEL.
    #[arg(long)]
    parallel: Option<usize>,
}

#[derive(Args)]
struct BoundsArgs {
    /// Grid spec: comma-separated key=value pairs with exactly one range
    /// key=start:step:end. Keys: n_t, k, b_f, b_c, rho.
    /// Example: "b_c=0:4:40,n_t=16,k=2,b_f=6,rho=1".
    #[arg(long, default_value = grid::DEFAULT_GRID)]
    grid: String,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Args)]
struct PartitionArgs {
    /// Path to the scenario TOML file.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Preset(args) => cmd_preset(args),
        Command::Bounds(args) => cmd_bounds(args),
        Command::Partition(args) => cmd_partition(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if error_is_config(&e) {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

/// Exit-code classification: configuration and I/O problems are exit 1,
/// anything that failed while computing is exit 2.
fn error_is_config(e: &Error) -> bool {
    match e {
        Error::Trial { source, .. } => error_is_config(source),
        _ => e.is_config(),
    }
}

fn load_scenario(path: &PathBuf, seed: Option<u64>, trials: Option<u64>) -> Result<ScenarioConfig, Error> {
    let raw = RawConfig::load(path)?;
    let mut cfg = raw.to_scenario()?;
    if let Some(s) = seed {
        cfg.master_seed = s;
    }
    if let Some(t) = trials {
        cfg.trials = t;
        cfg.validate()?;
    }
    Ok(cfg)
}

/// Runs `f` under the requested worker count. The flag wins over
/// $COOPFB_PARALLEL; 0 lets the scheduler pick. Results are identical for
/// any worker count; this only controls resource use.
fn with_workers<T>(requested: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, Error>
where
    T: Send,
{
    let from_env = || {
        std::env::var(PARALLEL_ENV)
            .ok()
            .and_then(|v| v.parse::<usize>().ok())
    };
    let workers = requested.or_else(from_env);
    #[cfg(feature = "parallel")]
    {
        match workers {
            Some(n) if n > 0 => {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(|e| Error::Numerical(format!("worker pool: {e}")))?;
                Ok(pool.install(f))
            }
            _ => Ok(f()),
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = workers;
        Ok(f())
    }
}

fn cmd_run(args: RunArgs) -> Result<(), Error> {
    let cfg = load_scenario(&args.config, args.seed, args.trials)?;
    let agg = with_workers(args.parallel, || coopfb::sim::run_experiment(&cfg))??;
    if let Some(w) = &agg.warning {
        eprintln!("warning: {w}");
    }
    let doc = output::experiment_document("run", &agg);
    output::emit(&doc, args.format, args.out.as_deref())
}

fn cmd_preset(args: PresetArgs) -> Result<(), Error> {
    let preset = presets::build(args.name, args.seed, args.trials)?;
    let doc = with_workers(args.parallel, || presets::execute(&preset))??;
    output::emit(&doc, args.format, args.out.as_deref())
}

fn cmd_bounds(args: BoundsArgs) -> Result<(), Error> {
    let parsed = grid::parse(&args.grid)?;
    let doc = grid::evaluate(&parsed)?;
    output::emit(&doc, args.format, args.out.as_deref())
}

fn cmd_partition(args: PartitionArgs) -> Result<(), Error> {
    let cfg = load_scenario(&args.config, None, None)?;
    let doc = presets::partition_document(&cfg)?;
    output::emit(&doc, args.format, args.out.as_deref())
}
