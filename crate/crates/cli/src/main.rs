use std::process::ExitCode;

use clap::Parser;
use dpmbq_cli::commands::run;
use dpmbq_cli::{configure_threads, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads(std::env::var("DPMBQ_THREADS").ok().as_deref())
        .and_then(|()| run(&cli.command))
        .and_then(|output| output.emit());
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
