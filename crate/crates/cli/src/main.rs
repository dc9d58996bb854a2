use std::process::ExitCode;

use clap::Parser;
use env_logger::Env;

use mmdmap_cli::{run, Cli};

fn main() -> ExitCode {
    env_logger::Builder::from_env(Env::default().filter_or("MMDMAP_LOG", "info")).init();
    let cli = Cli::parse();
    ExitCode::from(run(&cli))
}
