use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use xlirs_core::runner::{
    dump_channel, emit_results, overhead_csv, overhead_table, run_experiment_with, Execution,
    ExperimentConfig,
};

/// XL-IRS cascaded channel estimation simulator.
///
/// Results go to the config's `output_dir` unless XLIRS_OUTPUT_DIR is set.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the Monte-Carlo sweep and write detail, aggregate and manifest files.
    Run {
        config: PathBuf,
        /// Run trials on the current thread only.
        #[arg(long)]
        sequential: bool,
    },
    /// Print and write the closed-form pilot overhead table.
    Overhead { config: PathBuf },
    /// Write one channel realization as a columnar text file.
    DumpChannel { config: PathBuf },
}

fn load(path: &PathBuf) -> Result<ExperimentConfig> {
    ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config, sequential } => {
            let config = load(&config)?;
            let dir = config.resolved_output_dir();
            let execution = if sequential {
                Execution::Sequential
            } else {
                Execution::Parallel
            };
            let start = Instant::now();
            let table = run_experiment_with(&config, execution)?;
            let files = emit_results(&table, &config, &dir)
                .with_context(|| format!("writing results to {}", dir.display()))?;
            let failed = table.rows.iter().filter(|r| r.failed()).count();
            eprintln!(
                "{} rows ({failed} failed) in {:.1}s -> {}",
                table.rows.len(),
                start.elapsed().as_secs_f64(),
                files.detail.display()
            );
            println!("{}", std::fs::read_to_string(&files.aggregate)?.trim_end());
        }
        Command::Overhead { config } => {
            let config = load(&config)?;
            let dir = config.resolved_output_dir();
            let text = overhead_csv(&overhead_table(&config)?);
            std::fs::create_dir_all(&dir)?;
            let path = dir.join("overhead.csv");
            std::fs::write(&path, &text).with_context(|| format!("writing {}", path.display()))?;
            print!("{text}");
        }
        Command::DumpChannel { config } => {
            let config = load(&config)?;
            let dir = config.resolved_output_dir();
            let path = dump_channel(&config, &dir)
                .with_context(|| format!("writing channel dump to {}", dir.display()))?;
            println!("{}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
