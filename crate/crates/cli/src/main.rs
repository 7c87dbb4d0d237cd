use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use planewave_adapt::experiment::{ingest_config, run_experiment, ExperimentMode, RunOptions};

#[derive(Parser)]
#[command(
    name = "pwadapt",
    version,
    about = "Adaptive planewave eigenvalue experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config file.
    Run {
        config: PathBuf,
        /// Output directory (overrides PWADAPT_OUT_DIR and the config).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// eigen-feasible, eigen-exact, source, uniform or compare.
        #[arg(long, value_parser = parse_mode)]
        mode: Option<ExperimentMode>,
        /// Only report errors.
        #[arg(long)]
        quiet: bool,
    },
}

fn parse_mode(s: &str) -> Result<ExperimentMode, String> {
    ExperimentMode::parse(s).ok_or_else(|| format!("unknown mode '{s}'"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Command::Run {
        config,
        out,
        seed,
        mode,
        quiet,
    } = cli.command;
    let level = if quiet { "error" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = ingest_config(&config).and_then(|c| {
        run_experiment(
            &c,
            &RunOptions {
                out_dir: out,
                mode,
                seed,
            },
        )
    });
    match result {
        Ok((summary, dir)) => {
            if !quiet {
                println!(
                    "{}: {} after {} iterations, |G| = {}, results in {}",
                    summary.mode,
                    summary.termination_reason,
                    summary.iterations,
                    summary.final_index_set_size,
                    dir.display()
                );
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
