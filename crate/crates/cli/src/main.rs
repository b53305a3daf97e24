use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gdtn_cli::commands::{self, EvaluateArgs};
use gdtn_cli::{CliError, Format, Outcome};

#[derive(Debug, Parser)]
#[command(
    name = "gdtn",
    version,
    about = "Digital twin network scenarios: validate, evaluate, failover, replicate"
)]
struct Cli {
    /// Root seed for every random stream.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for output files.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a scenario; prints one violation per line.
    Validate { scenario: PathBuf },
    /// Completion-time statistics of the twin graph's stochastic DAG.
    Evaluate {
        scenario: PathBuf,
        /// Monte Carlo replications.
        #[arg(long, default_value_t = 100_000, value_parser = clap::value_parser!(u64).range(1..))]
        n: u64,
        #[arg(long)]
        deadline: Option<f64>,
        /// Enumerate all outcomes instead of sampling (discrete durations only).
        #[arg(long)]
        exact: bool,
    },
    /// Run the link-failure scenario and report downtime and latencies.
    Failover { scenario: PathBuf },
    /// Ground truth, fit, replicate and compare for each seed.
    Replicate { scenario: PathBuf },
    /// Print the stochastic DAG derived from the twin graph.
    #[command(alias = "transform")]
    ExportDag { scenario: PathBuf },
    /// Fit one mixture per load from a `load_rps,response_ms` CSV.
    Fit {
        traces: PathBuf,
        #[arg(long, default_value_t = 2)]
        k: usize,
    },
}

fn dispatch(cli: &Cli) -> Result<Outcome, CliError> {
    let seed = cli.seed.unwrap_or(0);
    match &cli.command {
        Command::Validate { scenario } => commands::validate(scenario, cli.format),
        Command::Evaluate {
            scenario,
            n,
            deadline,
            exact,
        } => commands::evaluate(
            scenario,
            &EvaluateArgs {
                n: *n,
                seed,
                deadline: *deadline,
                exact: *exact,
            },
            cli.format,
        ),
        Command::Failover { scenario } => commands::failover(scenario, cli.format),
        Command::Replicate { scenario } => commands::replicate(scenario, cli.seed, cli.format),
        Command::ExportDag { scenario } => commands::export_dag(scenario),
        Command::Fit { traces, k } => commands::fit(traces, *k, seed, cli.format),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = dispatch(&cli).and_then(|outcome| {
        if let Some(dir) = &cli.out {
            outcome.write_files(dir)?;
        }
        Ok(outcome)
    });
    match result {
        Ok(outcome) => {
            let mut stdout = std::io::stdout().lock();
            let _ = stdout.write_all(outcome.stdout.as_bytes());
            ExitCode::from(outcome.code)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
