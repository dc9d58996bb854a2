//! Command-line front end for `mmdmap`: `align`, `evaluate`, `induce` and
//! `ablate`, configured by a key-value file with flag overrides.

pub mod args;
pub mod artifacts;
pub mod commands;
pub mod config;
pub mod error;
pub mod report;

pub use args::{Cli, RunArgs, Subcmd};
pub use commands::Outcome;
pub use config::{Command, RunConfig};
pub use error::{CliError, EXIT_CONFIG, EXIT_FAILURE, EXIT_NON_CONVERGENCE, EXIT_SUCCESS};

/// Runs one parsed invocation and returns its exit status.
pub fn run(cli: &Cli) -> u8 {
    let (cmd, args) = cli.command.split();
    let result = args.resolve().and_then(|cfg| match cmd {
        Command::Align => commands::cmd_align(&cfg),
        Command::Evaluate => commands::cmd_evaluate(&cfg).map(|r| r.0),
        Command::Induce => commands::cmd_induce(&cfg).map(|r| r.0),
        Command::Ablate => commands::cmd_ablate(&cfg).map(|r| r.0),
    });
    match result {
        Ok(Outcome::Success) => EXIT_SUCCESS,
        Ok(Outcome::NonConvergence(msg)) => {
            log::error!("non-convergence: {msg}");
            EXIT_NON_CONVERGENCE
        }
        Err(e) => {
            log::error!("{e}");
            e.exit_code()
        }
    }
}
