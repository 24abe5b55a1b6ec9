use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rare_al::cli::{cmd_bench, cmd_run, cmd_truth, BenchOptions, CliError, RunOptions, TruthOptions};
use rare_al::problems::TruthMethod;

#[derive(Debug, Parser)]
#[command(name = "rare-al", version, about = "Active-learning estimation of small failure probabilities")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Method {
    Grid,
    Mc,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run replicated experiments and write traces plus a summary.
    Run {
        config: PathBuf,
        /// Replications run concurrently (default: all cores).
        #[arg(long)]
        jobs: Option<usize>,
        /// Base seed; replication i uses seed ^ i.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Compute and store the reference failure probability.
    Truth {
        config: PathBuf,
        #[arg(long, value_enum)]
        method: Option<Method>,
        /// Points per axis (grid) or samples (mc).
        #[arg(long)]
        resolution: Option<u64>,
    },
    /// Run the shipped benchmark configurations against their thresholds.
    Bench {
        #[arg(long, default_value_t = 20)]
        replications: usize,
        #[arg(long)]
        jobs: Option<usize>,
    },
}

fn dispatch(cmd: Command) -> Result<bool, CliError> {
    match cmd {
        Command::Run { config, jobs, seed } => {
            let report = cmd_run(&config, &RunOptions { jobs, seed })?;
            println!("{report}");
            Ok(true)
        }
        Command::Truth { config, method, resolution } => {
            let method = method.map(|m| match m {
                Method::Grid => TruthMethod::Grid,
                Method::Mc => TruthMethod::Mc,
            });
            let t = cmd_truth(&config, &TruthOptions { method, resolution })?;
            println!(
                "P = {:.16e} (std error {:.3e}, {:?}, resolution {}, {} evaluations)",
                t.value, t.std_error, t.method, t.resolution, t.evaluations
            );
            Ok(true)
        }
        Command::Bench { replications, jobs } => {
            let report = cmd_bench(&BenchOptions { replications, jobs })?;
            print!("{report}");
            Ok(report.passed())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
