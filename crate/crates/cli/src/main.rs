use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gadp_cli::{cmd_compare, cmd_feasible, cmd_offline, cmd_online, cmd_simulate, CliError, Overrides, ProblemFile};

#[derive(Parser)]
#[command(name = "gadp", version, about = "Polynomial policy iteration and online learning for polynomial systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Problem file (TOML).
    #[arg(long)]
    problem: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Draw noise phases from this seed.
    #[arg(long)]
    seed: Option<u64>,
    /// SDP feasibility and gap tolerance.
    #[arg(long)]
    solver_tol: Option<f64>,
    /// Iteration cap for policy iteration and learning.
    #[arg(long)]
    max_iter: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Model-based policy iteration.
    Offline(Common),
    /// Model-free learning on the simulated plant.
    Online(Common),
    /// Noise-free closed-loop run.
    Simulate(Common),
    /// Sample value functions on the region grid.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Polynomials, or `@file` with one per line.
        #[arg(required = true)]
        values: Vec<String>,
    },
    /// Search for an initial value function.
    Feasible(Common),
}

fn run(cli: Cli) -> Result<(), CliError> {
    let common = match &cli.command {
        Command::Offline(c) | Command::Online(c) | Command::Simulate(c) | Command::Feasible(c) => c,
        Command::Compare { common, .. } => common,
    };
    let (mut file, original) = ProblemFile::load(&common.problem)?;
    file.apply(&Overrides {
        seed: common.seed,
        solver_tol: common.solver_tol,
        max_iter: common.max_iter,
    });
    let problem = file.validate()?;
    let out = &common.out;
    match &cli.command {
        Command::Offline(_) => cmd_offline(&problem, &original, out),
        Command::Online(_) => cmd_online(&problem, &original, out),
        Command::Simulate(_) => cmd_simulate(&problem, &original, out),
        Command::Feasible(_) => cmd_feasible(&problem, &original, out),
        Command::Compare { values, .. } => cmd_compare(&problem, &original, out, values),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
