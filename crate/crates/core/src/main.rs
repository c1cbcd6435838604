use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use spamnet::error::ErrorKind;
use spamnet::io::{self, Invocation};

#[derive(Parser)]
#[command(name = "spamnet", version, about = "Sparse additive auto-regressive network estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic data set and its ground truth.
    Simulate(Args),
    /// Fit the network to a data set.
    Fit(Args),
    /// Report critical rates and theory penalties.
    Rates(Args),
    /// Run a simulation grid and summarise MSE trends.
    Experiment(Args),
    /// Cluster a fitted network.
    Cluster(Args),
    /// Choose penalties by rolling-back cross-validation.
    Cv(Args),
    /// One-step-ahead conditional means from a saved fit.
    Predict(Args),
}

#[derive(clap::Args)]
struct Args {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Input series (CSV with a header row).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output directory; overrides `out` in the configuration.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `seed` in the configuration.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (run, args): (fn(&Invocation) -> spamnet::Result<PathBuf>, Args) = match cli.command {
        Command::Simulate(a) => (io::cmd_simulate, a),
        Command::Fit(a) => (io::cmd_fit, a),
        Command::Rates(a) => (io::cmd_rates, a),
        Command::Experiment(a) => (io::cmd_experiment, a),
        Command::Cluster(a) => (io::cmd_cluster, a),
        Command::Cv(a) => (io::cmd_cv, a),
        Command::Predict(a) => (io::cmd_predict, a),
    };
    let result = Invocation::load(&args.config, args.data, args.out, args.seed).and_then(|inv| run(&inv));
    match result {
        Ok(manifest) => {
            println!("{}", manifest.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.kind() {
                ErrorKind::Config => 2,
                ErrorKind::Data => 3,
                ErrorKind::Numerical => 4,
            })
        }
    }
}
