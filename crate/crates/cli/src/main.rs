use std::path::PathBuf;
use std::process::ExitCode;

use bdy_core::harness::{init_thread_pool, run_experiment, Config, Experiment};
use bdy_core::Error;
use clap::{Parser, Subcommand};

/// Experiments for the BDY wealth-exchange model.
#[derive(Parser)]
#[command(name = "bdy", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config.
    Run { config: PathBuf },
    /// Parse and validate a config without running it.
    Validate { config: PathBuf },
    /// List the named experiments.
    ListExperiments,
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config { .. } | Error::InvalidParam { .. } | Error::Misaligned { .. } | Error::Cfl(_) => 2,
        Error::NumericalAbort { .. } | Error::Domain(_) | Error::Io(_) => 1,
    }
}

fn execute(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::ListExperiments => {
            for e in Experiment::ALL {
                println!("{:<20} {}", e.name(), e.description());
            }
        }
        Command::Validate { config } => {
            let cfg = Config::from_path(&config)?;
            println!("{}: ok ({})", config.display(), cfg.experiment);
        }
        Command::Run { config } => {
            let cfg = Config::from_path(&config)?;
            let threads = init_thread_pool()?;
            log::info!("{threads} worker threads");
            let report = run_experiment(&cfg)?;
            for f in &report.files {
                println!("{}", f.display());
            }
            eprintln!("{} finished in {:.2} s", cfg.experiment, report.wall_time_s);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
