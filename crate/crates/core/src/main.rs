use std::io::{ErrorKind, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use darcs::config::parse_config;
use darcs::engine::run_experiment;
use darcs::matrix::{load_axes, run_matrix};
use darcs::output::emit_reports;
use darcs::{Error, Result};

#[derive(Parser)]
#[command(
    name = "darcs",
    version,
    about = "Hierarchical federated learning poisoning-defense simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Master seed; overrides the file and any `seed=` override.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory. Without it the summary is printed to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// `key=value` overrides, dotted keys for nested fields.
        overrides: Vec<String>,
    },
    /// Run the cartesian product of the axes file over a base config.
    Matrix {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        axes: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Parse and validate a config, printing the effective values.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            config,
            seed,
            out,
            overrides,
        } => {
            let cfg = parse_config(Some(&config), &overrides, seed)?;
            let result = run_experiment(&cfg)?;
            match out {
                Some(dir) => {
                    emit_reports(&result, &dir)?;
                    eprintln!(
                        "{} rounds, convergence {}, final accuracy {:.4} -> {}",
                        result.summary.rounds_run,
                        result.summary.convergence_round,
                        result.summary.final_accuracy,
                        dir.display()
                    );
                }
                None => print_json(&result.summary)?,
            }
        }
        Command::Matrix {
            config,
            axes,
            out,
            jobs,
        } => {
            let cfg = parse_config(Some(&config), &[], None)?;
            let axes = load_axes(&axes)?;
            let rows = run_matrix(&cfg, &axes, &out, jobs)?;
            let failed = rows.iter().filter(|r| r.outcome.is_err()).count();
            eprintln!(
                "{} runs, {} failed -> {}",
                rows.len(),
                failed,
                out.display()
            );
        }
        Command::Validate { config } => {
            let cfg = parse_config(Some(&config), &[], None)?;
            print_json(&cfg)?;
        }
    }
    Ok(())
}

/// A closed pipe (`darcs run ... | head`) is not an error.
fn print_json(value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != ErrorKind::BrokenPipe => Err(Error::Io {
            path: "<stdout>".into(),
            source: e,
        }),
        _ => Ok(()),
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
