use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mmf_cli::{run, Command, Overrides};

#[derive(Parser)]
#[command(name = "mmf", version, about = "Bayesian multinomial matrix factorization")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic data set with known factors
    Simulate(Args),
    /// Run the MCMC sampler and write trace archives
    Fit(Args),
    /// Point estimates (and recovery scores when the truth is given)
    Summarize(Args),
    /// PSRF and posterior predictive check
    Diagnose(Args),
}

#[derive(clap::Args)]
struct Args {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    chains: Option<usize>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    burnin: Option<usize>,
    #[arg(long)]
    thin: Option<usize>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let (command, args) = match cli.command {
        Cmd::Simulate(a) => (Command::Simulate, a),
        Cmd::Fit(a) => (Command::Fit, a),
        Cmd::Summarize(a) => (Command::Summarize, a),
        Cmd::Diagnose(a) => (Command::Diagnose, a),
    };
    let overrides = Overrides {
        out: args.out,
        seed: args.seed,
        chains: args.chains,
        iters: args.iters,
        burnin: args.burnin,
        thin: args.thin,
    };
    match run(command, &args.config, &overrides) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mmf: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
