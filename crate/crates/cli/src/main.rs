//! Command line front end: generate synthetic fleets, build leakage-safe
//! splits, train, forecast, evaluate, run the ablation table, and verify
//! gradients.
//!
//! Exit codes: 0 success, 1 argument/input validation failure, 2 runtime
//! failure.

mod commands;
mod config;

use clap::error::ErrorKind;
use clap::Parser;

use config::Cli;

pub enum AppError {
    Validation(String),
    Runtime(String),
}

impl AppError {
    pub fn validation(msg: impl std::fmt::Display) -> Self {
        AppError::Validation(msg.to_string())
    }

    pub fn runtime(msg: impl std::fmt::Display) -> Self {
        AppError::Runtime(msg.to_string())
    }
}

fn main() {
    std::process::exit(real_main());
}

fn real_main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };

    if let Err(e) = init_threads(&cli) {
        eprintln!("error: {e}");
        return 1;
    }

    match commands::run(cli) {
        Ok(()) => 0,
        Err(AppError::Validation(msg)) => {
            eprintln!("error: {msg}");
            1
        }
        Err(AppError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            2
        }
    }
}

/// Thread budget: `--threads` wins, then HELIOS_THREADS, then all cores.
fn init_threads(cli: &Cli) -> Result<(), String> {
    let n = match cli.threads {
        Some(n) => Some(n),
        None => match std::env::var("HELIOS_THREADS") {
            Ok(v) => Some(
                v.parse::<usize>()
                    .map_err(|_| format!("HELIOS_THREADS must be a positive integer, got '{v}'"))?,
            ),
            Err(_) => None,
        },
    };
    if let Some(n) = n {
        if n == 0 {
            return Err("--threads must be >= 1".into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| format!("thread pool: {e}"))?;
    }
    Ok(())
}
