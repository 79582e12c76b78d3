use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use synclaw::config::{Experiment, ExperimentConfig};
use synclaw::{replay, run, Error, RunOptions};

const EXIT_ERROR: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_PARTIAL: u8 = 3;
const EXIT_MISMATCH: u8 = 4;

#[derive(Parser)]
#[command(
    name = "synclaw",
    version,
    about = "Synchronisation experiments for viscous stochastic conservation laws"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        config: PathBuf,
        /// Worker threads (0: one per core).
        #[arg(long, default_value_t = 0)]
        workers: usize,
        /// Output directory (default: $SYNCLAW_OUTPUT_ROOT/<output_dir>).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-run a manifest's config and compare every output byte for byte.
    Replay {
        manifest: PathBuf,
        #[arg(long, default_value_t = 0)]
        workers: usize,
    },
    /// Run the closed-form checks on their default config.
    Oracle {
        #[arg(long, default_value_t = 0)]
        workers: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the default config of an experiment.
    Template { experiment: String },
}

fn report(source: Option<&Path>, e: &Error) -> ExitCode {
    match (e, source) {
        (Error::Config { line, message }, Some(p)) => {
            eprintln!("{}:{line}: {message}", p.display());
            ExitCode::from(EXIT_CONFIG)
        }
        (Error::Config { .. }, None) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
        _ => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}

fn execute(cfg: &ExperimentConfig, source: Option<&Path>, opts: &RunOptions) -> ExitCode {
    match run(cfg, opts) {
        Ok(outcome) => {
            println!(
                "{}: {} files in {}",
                cfg.experiment,
                outcome.manifest.files.len(),
                outcome.dir.display()
            );
            if outcome.is_complete() {
                ExitCode::SUCCESS
            } else {
                for f in &outcome.manifest.failures {
                    match f.seed {
                        Some(s) => eprintln!("failed: {} (seed {s}): {}", f.task, f.error),
                        None => eprintln!("failed: {}: {}", f.task, f.error),
                    }
                }
                ExitCode::from(EXIT_PARTIAL)
            }
        }
        Err(e) => report(source, &e),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, workers, out } => {
            let text = match std::fs::read_to_string(&config) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("error: {}: {e}", config.display());
                    return ExitCode::from(EXIT_ERROR);
                }
            };
            let cfg = match ExperimentConfig::parse(&text) {
                Ok(c) => c,
                Err(e) => return report(Some(&config), &e),
            };
            execute(&cfg, Some(&config), &RunOptions { workers, out_dir: out })
        }
        Command::Oracle { workers, out } => {
            let cfg = ExperimentConfig::default_for(Experiment::Oracle);
            execute(&cfg, None, &RunOptions { workers, out_dir: out })
        }
        Command::Replay { manifest, workers } => match replay(&manifest, workers) {
            Ok(rep) => {
                if !rep.config_hash_matches {
                    eprintln!("config hash does not match the recorded config");
                }
                match &rep.mismatch {
                    Some(m) => eprintln!("mismatch in {}: {}", m.file, m.detail),
                    None => println!("replay ok: {} files identical", rep.files_checked),
                }
                if rep.passed() {
                    ExitCode::SUCCESS
                } else {
                    ExitCode::from(EXIT_MISMATCH)
                }
            }
            Err(e) => report(None, &e),
        },
        Command::Template { experiment } => match Experiment::from_name(&experiment) {
            Some(exp) => {
                print!("{}", ExperimentConfig::default_for(exp).to_text());
                ExitCode::SUCCESS
            }
            None => {
                eprintln!(
                    "error: unknown experiment `{experiment}` (expected one of {})",
                    Experiment::ALL.map(|e| e.name()).join(", ")
                );
                ExitCode::from(EXIT_CONFIG)
            }
        },
    }
}
