use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = featloop_cli::Cli::parse();
    match featloop_cli::execute(&cli) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
