use std::path::PathBuf;
use std::process::ExitCode;

use bangbang_cli::commands::{run, Command, Invocation};
use bangbang_cli::ERROR_CODE;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "bangbang",
    version,
    about = "Bang-bang optimal control: solve, verify, perturb"
)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Solve the configured problem and write solution, state, adjoint and trace.
    Solve(Common),
    /// Check growth and second-order conditions at a stored solution.
    Analyze(Common),
    /// Run perturbation sweeps around a stored solution and fit the Hölder exponent.
    Perturb(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output (and solution) directory; defaults to `run.output` of the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for sampling and sweeps.
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Overrides `run.seed`.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, common) = match cli.command {
        Sub::Solve(c) => (Command::Solve, c),
        Sub::Analyze(c) => (Command::Analyze, c),
        Sub::Perturb(c) => (Command::Perturb, c),
    };
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(common.threads.max(1))
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start thread pool: {e}");
            return ExitCode::from(ERROR_CODE);
        }
    };
    let inv = Invocation {
        command,
        config: common.config,
        out: common.out,
        seed: common.seed,
    };
    match pool.install(|| run(&inv)) {
        Ok(outcome) => ExitCode::from(outcome.code()),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(ERROR_CODE)
        }
    }
}
