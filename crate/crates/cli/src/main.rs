mod args;
mod commands;
mod load;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Eval(a) => commands::eval(a),
        Command::Verify(a) => commands::verify(a),
        Command::Classify(a) => commands::classify(a),
        Command::Geodesic(a) => commands::geodesic(a),
        Command::Scan(a) => commands::scan(a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
