use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use spinmet_cli::{report::report, run, validate, CliError};

/// Minimal-evolution-time campaigns for silicon spin-qubit chains.
#[derive(Parser)]
#[command(name = "spinmet", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a config and write its artifacts.
    Run { config: PathBuf },
    /// Check a config and every file it references without running.
    Validate { config: PathBuf },
    /// Summarize an artifact directory.
    Report { dir: PathBuf },
}

fn fail(e: CliError) -> ExitCode {
    eprintln!("spinmet: {e}");
    ExitCode::from(e.exit_code())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config } => match run(&config) {
            Ok(s) => {
                for l in &s.lines {
                    println!("{l}");
                }
                if s.unconverged_rows > 0 {
                    eprintln!("spinmet: warning: {} rows did not converge (flagged in the output)", s.unconverged_rows);
                }
                println!("artifacts in {}", s.output_dir.display());
                ExitCode::SUCCESS
            }
            Err(e) => fail(e),
        },
        Command::Validate { config } => match validate(&config) {
            Ok(kind) => {
                println!("{}: ok ({kind})", config.display());
                ExitCode::SUCCESS
            }
            Err(e) => fail(e),
        },
        Command::Report { dir } => match report(&dir) {
            Ok(lines) => {
                for l in lines {
                    println!("{l}");
                }
                ExitCode::SUCCESS
            }
            Err(e) => fail(e),
        },
    }
}
