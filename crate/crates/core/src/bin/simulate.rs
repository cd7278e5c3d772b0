use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use cellfree_ris::experiment::{load_config, run_sweep_traced, write_csv, write_trace_csv, Mode};
use cellfree_ris::Error;

enum Failure {
    Config(Error),
    Runtime(Error),
}

fn classify(e: Error) -> Failure {
    if e.is_config_error() {
        Failure::Config(e)
    } else {
        Failure::Runtime(e)
    }
}

/// Runs a sum-rate sweep of the distributed RIS beamforming design and
/// writes one CSV row per (power, realization).
#[derive(Debug, Parser)]
#[command(name = "simulate", version)]
struct Args {
    /// Experiment description (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured mode.
    #[arg(long)]
    mode: Option<Mode>,
    /// Overrides the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the power sweep, comma separated, in dBm.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pmax_dbm: Option<Vec<f64>>,
    /// Overrides the number of channel realizations per power.
    #[arg(long)]
    realizations: Option<usize>,
    /// Overrides the number of worker threads (0 = all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Result CSV.
    #[arg(long)]
    out: PathBuf,
    /// Optional per-iteration trace CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
}

fn execute(args: Args) -> Result<usize, Failure> {
    // an unreadable config file is a configuration problem too
    let mut cfg = load_config(&args.config).map_err(Failure::Config)?;
    if let Some(mode) = args.mode {
        cfg.mode = mode;
    }
    if let Some(seed) = args.seed {
        cfg.master_seed = seed;
    }
    if let Some(p) = args.pmax_dbm {
        cfg.sweep_dbm = p;
    }
    if let Some(n) = args.realizations {
        cfg.realizations = n;
    }
    if let Some(n) = args.threads {
        cfg.threads = n;
    }
    cfg.output = args.out.display().to_string();
    cfg.validate().map_err(Failure::Config)?;

    let cells = run_sweep_traced(&cfg).map_err(classify)?;
    let (rows, traces): (Vec<_>, Vec<_>) = cells.into_iter().unzip();
    write_csv(&rows, &args.out).map_err(|e| Failure::Runtime(e.context(format!("writing {}", args.out.display()))))?;
    if let Some(path) = &args.trace {
        write_trace_csv(&traces, path).map_err(|e| Failure::Runtime(e.context(format!("writing {}", path.display()))))?;
    }
    Ok(rows.len())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match execute(args) {
        Ok(n) => {
            eprintln!("wrote {n} rows");
            ExitCode::SUCCESS
        }
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}
