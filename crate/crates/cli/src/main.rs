use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use optofock_cli::commands::{cmd_audit, cmd_calibrate, cmd_evolve, cmd_sweep, cmd_wigner, CommandError, Outcome};
use optofock_cli::ExperimentConfig;

#[derive(Parser, Debug)]
#[command(name = "optofock", version, about = "Phonon Fock-state preparation experiments")]
struct Cli {
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; defaults to the config's `output`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for sweeps.
    #[arg(long, global = true, env = "OPTOFOCK_THREADS")]
    threads: Option<usize>,
    /// Config override `key=value` (dotted keys for nested tables); repeatable.
    #[arg(long = "override", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Coupling calibration table for M = 1..=max-m.
    Calibrate {
        #[arg(long, default_value_t = 20)]
        max_m: usize,
    },
    /// Steady-state metrics along the configured damping sweep.
    Sweep,
    /// Time series from the initial state at the configured point.
    Evolve,
    /// Wigner grid and phonon occupancy of the steady state.
    Wigner,
    /// Truncation and tolerance convergence audit.
    Audit,
}

fn run(cli: Cli) -> Result<Outcome, CommandError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CommandError::Usage(format!("thread pool: {e}")))?;
    }
    if let Command::Calibrate { max_m } = cli.command {
        let out = cli.out.unwrap_or_else(|| PathBuf::from("out"));
        return cmd_calibrate(max_m, &out);
    }
    let path = cli.config.ok_or_else(|| CommandError::Usage("this command needs --config PATH".into()))?;
    let config = ExperimentConfig::load(&path, &cli.overrides).map_err(|e| CommandError::Usage(e.to_string()))?;
    let out = cli.out.unwrap_or_else(|| config.output.clone());
    match cli.command {
        Command::Calibrate { .. } => unreachable!("handled above"),
        Command::Sweep => cmd_sweep(&config, &out),
        Command::Evolve => cmd_evolve(&config, &out),
        Command::Wigner => cmd_wigner(&config, &out),
        Command::Audit => cmd_audit(&config, &out),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(outcome) => {
            println!("{}", outcome.summary);
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            if outcome.success {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
