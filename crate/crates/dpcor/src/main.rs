use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dpcor::cli::{
    estimate_bayes_cmd, estimate_mle_cmd, privatize_cmd, simulate_cmd, verify_dp_cmd,
    EstimateBayesArgs, EstimateMleArgs, PrivatizeArgs, SimulateArgs, VerifyDpArgs,
};
use dpcor::mechanism::Mechanism;

#[derive(Parser)]
#[command(
    name = "dpcor",
    version,
    about = "Differentially private Gaussian-copula correlation estimation from median-quadrant counts"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Read a CSV dataset, compute quadrant counts, and write privatized
    /// counts as JSON. Raw data never reaches the output.
    Privatize {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Total privacy budget, split evenly over the p(p-1)/2 pairs.
        #[arg(long)]
        epsilon: f64,
        /// geometric | tgm | btgm | rgm
        #[arg(long, default_value = "geometric")]
        mechanism: String,
        #[arg(long)]
        seed: u64,
    },
    /// Noise-naive MLE point estimate from range-preserving noisy counts.
    EstimateMle {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Noise-aware Bayesian posterior (grid at p=2, Metropolis otherwise)
    /// from geometric-mechanism noisy counts.
    EstimateBayes {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 1000)]
        burnin: usize,
        #[arg(long, default_value_t = 2001)]
        grid_size: usize,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Use the Metropolis sampler even at p = 2.
        #[arg(long, default_value_t = false)]
        force_mh: bool,
    },
    /// Run a replicated simulation scenario from a TOML config: metrics
    /// JSON to --output, per-replicate CSV next to it (.records.csv).
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Numerically verify the DP guarantee of a mechanism by enumerating
    /// output distributions over the given bounds.
    VerifyDp {
        /// geometric | tgm | btgm | rgm
        #[arg(long)]
        mechanism: String,
        #[arg(long)]
        epsilon: f64,
        #[arg(long, default_value_t = 0)]
        lower: i64,
        #[arg(long, default_value_t = 25)]
        upper: i64,
        #[arg(long, default_value_t = 1.0)]
        delta: f64,
        /// Write the report here instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> dpcor::Result<()> {
    match cli.command {
        Command::Privatize {
            input,
            output,
            epsilon,
            mechanism,
            seed,
        } => privatize_cmd(&PrivatizeArgs {
            input,
            output,
            epsilon,
            mechanism: Mechanism::parse(&mechanism)?,
            seed,
        }),
        Command::EstimateMle { input, output } => {
            estimate_mle_cmd(&EstimateMleArgs { input, output })
        }
        Command::EstimateBayes {
            input,
            output,
            seed,
            samples,
            burnin,
            grid_size,
            alpha,
            force_mh,
        } => estimate_bayes_cmd(&EstimateBayesArgs {
            input,
            output,
            seed,
            samples,
            burnin,
            grid_size,
            alpha,
            force_mh,
        }),
        Command::Simulate { config, output } => simulate_cmd(&SimulateArgs { config, output }),
        Command::VerifyDp {
            mechanism,
            epsilon,
            lower,
            upper,
            delta,
            output,
        } => verify_dp_cmd(&VerifyDpArgs {
            mechanism: Mechanism::parse(&mechanism)?,
            epsilon,
            lower,
            upper,
            delta,
            output,
        })
        .map(|_| ()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
