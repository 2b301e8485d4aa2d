use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pbdw_cli::studies::{cmd_mconv, cmd_place, cmd_xi_sweep};
use pbdw_cli::suite::{run_all, summarize};
use pbdw_cli::{CliError, ExperimentConfig};

#[derive(Parser)]
#[command(name = "pbdw", version, about = "PBDW state estimation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML configuration; omitted keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, overriding `output_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Base seed, overriding `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Greedy versus random sensor placement.
    Place,
    /// Estimation error as the number of observations grows.
    Mconv,
    /// Holdout and true error curves over the regularization weight.
    XiSweep,
    /// Runs the full property suite and all three studies.
    Validate,
}

fn load(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let cfg = load(cli)?;
    match cli.command {
        Command::Place => {
            for path in cmd_place(&cfg)? {
                println!("{}", path.display());
            }
        }
        Command::Mconv => println!("{}", cmd_mconv(&cfg)?.display()),
        Command::XiSweep => println!("{}", cmd_xi_sweep(&cfg)?.display()),
        Command::Validate => {
            let outcomes = run_all(&cfg, |o| println!("{o}"));
            summarize(&outcomes)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
