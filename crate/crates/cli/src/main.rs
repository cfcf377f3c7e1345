use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use wptirs_core::harness::{load_config, run_experiment, write_results, ConfigFile, OutputFormat};
use wptirs_core::Error;

#[derive(Parser)]
#[command(name = "wptirs", version, about = "IRS-aided multisine WPT experiment runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its results.
    Run {
        config: PathBuf,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        /// Worker threads.
        #[arg(long, default_value_t = 1)]
        parallel: usize,
        /// Overrides experiment.seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Write 0 in the wall_ms column.
        #[arg(long)]
        no_timing: bool,
    },
    /// Check a config file without running it.
    Validate { config: PathBuf },
    /// Print the baseline config.
    Defaults,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

fn validation(e: Error) -> (u8, String) {
    (1, e.to_string())
}

fn run(cli: Cli) -> Result<(), (u8, String)> {
    match cli.command {
        Command::Defaults => {
            print!("{}", ConfigFile::default().to_toml());
            Ok(())
        }
        Command::Validate { config } => {
            let spec = load_config(&config).map_err(validation)?;
            println!("ok: {} ({} trials, config hash {})", spec.scenario().name(), spec.file.experiment.trials, spec.config_hash());
            Ok(())
        }
        Command::Run { config, out, format, parallel, seed, no_timing } => {
            let mut spec = load_config(&config).map_err(validation)?;
            if let Some(seed) = seed {
                spec.file.experiment.seed = seed;
            }
            if no_timing {
                spec.file.experiment.timing = false;
            }
            if parallel == 0 {
                return Err((1, "--parallel must be at least 1".into()));
            }
            let result = run_experiment(&spec, parallel).map_err(|e| (2, e.to_string()))?;
            for (value, trial, algorithm, message) in &result.metadata.failures {
                eprintln!("warning: {algorithm} failed at sweep value {value}, trial {trial}: {message}");
            }
            let format = match format {
                Format::Csv => OutputFormat::Csv,
                Format::Json => OutputFormat::Json,
            };
            match out {
                Some(path) => write_results(&result, &path, format).map_err(|e| (2, e.to_string())),
                None => {
                    match format {
                        OutputFormat::Csv => print!("{}", result.to_csv()),
                        OutputFormat::Json => println!("{}", result.to_json()),
                    }
                    Ok(())
                }
            }
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err((code, message)) => {
            eprintln!("error: {message}");
            ExitCode::from(code)
        }
    }
}
