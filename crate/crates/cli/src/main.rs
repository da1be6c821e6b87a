use std::process::ExitCode;

use clap::Parser;

use sandpile_cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(report) => {
            for p in &report.outputs {
                println!("{}", p.display());
            }
            if let Some(e) = &report.failure {
                eprintln!("error: {e}");
            }
            ExitCode::from(report.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
