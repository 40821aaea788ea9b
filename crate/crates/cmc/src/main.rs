use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cmc::{run, Command, RunConfig};

#[derive(Parser)]
#[command(name = "cmc", version, about = "Conditional Markov chains: solve, check, build, simulate and price")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,

    /// Input config file (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Directory for output artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Number of Monte Carlo paths.
    #[arg(long, global = true)]
    paths: Option<usize>,

    /// Absolute tolerance for structural checks.
    #[arg(long, global = true, default_value_t = cmc_core::STRUCTURAL_TOL)]
    tol: f64,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check that a model config describes valid generators.
    Validate,
    /// Solve the Kolmogorov equations and export P(s,t) and the state law.
    Solve,
    /// Run the strong and weak consistency checks.
    Check {
        /// Only check this component.
        #[arg(long)]
        component: Option<usize>,
    },
    /// Build a copula candidate and validate its pre-copula conditions.
    Build,
    /// Simulate sample paths.
    Simulate,
    /// Price pool-aware premia.
    Price,
    /// Run named reproduction fixtures (all when none given).
    Reproduce { fixtures: Vec<String> },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, component, fixtures) = match cli.command {
        Cmd::Validate => (Command::Validate, None, Vec::new()),
        Cmd::Solve => (Command::Solve, None, Vec::new()),
        Cmd::Check { component } => (Command::Check, component, Vec::new()),
        Cmd::Build => (Command::Build, None, Vec::new()),
        Cmd::Simulate => (Command::Simulate, None, Vec::new()),
        Cmd::Price => (Command::Price, None, Vec::new()),
        Cmd::Reproduce { fixtures } => (Command::Reproduce, None, fixtures),
    };
    let cfg = RunConfig {
        command,
        config: cli.config,
        out: cli.out,
        seed: cli.seed,
        paths: cli.paths,
        tol: cli.tol,
        component,
        fixtures,
    };
    match run(&cfg) {
        Ok(out) => {
            print!("{}", out.stdout);
            ExitCode::from(out.status as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
