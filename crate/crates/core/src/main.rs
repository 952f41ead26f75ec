use std::process::ExitCode;

use clap::Parser;
use maskwatch::cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("maskwatch: error: {e}");
            ExitCode::from(if e.is_input_error() { 2 } else { 1 })
        }
        Err(_) => ExitCode::from(1),
    }
}
