use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use transportlab_cli::config::DEFAULT_OUTPUT;
use transportlab_cli::runner::write_error_report;
use transportlab_cli::{exit, parse_config, run_experiment, RunError, RunOptions};

#[derive(Parser)]
#[command(name = "transportlab", version, about = "Wave-packet transport experiments for 1D Schrödinger operators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its result files.
    Run {
        config: PathBuf,
        /// Output directory (overrides `experiment.output`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads.
        #[arg(long)]
        jobs: Option<usize>,
        /// Also run every cross-method oracle.
        #[arg(long)]
        verify: bool,
    },
    /// Check a config without running it.
    Validate { config: PathBuf },
}

const CONFIG_ERRORS: &str = "config_errors.txt";
const RUN_ERRORS: &str = "run_errors.txt";

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Validate { config } => validate(&config),
        Command::Run { config, out, jobs, verify } => run(&config, out, jobs, verify),
    };
    ExitCode::from(code as u8)
}

fn read(path: &PathBuf) -> Result<String, String> {
    std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn validate(path: &PathBuf) -> i32 {
    let text = match read(path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("{e}");
            return exit::CONFIG;
        }
    };
    match parse_config(&text) {
        Ok(c) => {
            println!("{}: valid {} experiment", path.display(), c.kind.name());
            exit::OK
        }
        Err(violations) => {
            for v in &violations {
                eprintln!("{}: {v}", path.display());
            }
            exit::CONFIG
        }
    }
}

fn run(path: &PathBuf, out: Option<PathBuf>, jobs: Option<usize>, verify: bool) -> i32 {
    let fallback = out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT));
    let report_errors = |dir: &PathBuf, name: &str, lines: Vec<String>| {
        for l in &lines {
            eprintln!("{l}");
        }
        if let Err(e) = write_error_report(dir, name, &lines) {
            eprintln!("could not write error report: {e}");
        }
    };
    let text = match read(path) {
        Ok(t) => t,
        Err(e) => {
            report_errors(&fallback, CONFIG_ERRORS, vec![e]);
            return exit::CONFIG;
        }
    };
    let config = match parse_config(&text) {
        Ok(c) => c,
        Err(violations) => {
            report_errors(
                &fallback,
                CONFIG_ERRORS,
                violations.iter().map(|v| format!("{}: {v}", path.display())).collect(),
            );
            return exit::CONFIG;
        }
    };
    if jobs == Some(0) {
        report_errors(&fallback, CONFIG_ERRORS, vec!["--jobs must be at least 1".into()]);
        return exit::CONFIG;
    }
    let dir = out.unwrap_or_else(|| PathBuf::from(&config.output));
    let options = RunOptions { out: dir.clone(), verify, jobs };
    match run_experiment(&config, &options) {
        Ok(report) => {
            for f in &report.files {
                println!("wrote {}", f.display());
            }
            if report.guard_failures.is_empty() {
                exit::OK
            } else {
                for g in &report.guard_failures {
                    eprintln!("guard: {g}");
                }
                exit::GUARD
            }
        }
        Err(RunError::Config(e)) => {
            report_errors(&dir, CONFIG_ERRORS, vec![format!("configuration rejected: {e}")]);
            exit::CONFIG
        }
        Err(e) => {
            report_errors(&dir, RUN_ERRORS, vec![e.to_string()]);
            exit::GUARD
        }
    }
}
