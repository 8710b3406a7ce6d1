//! One module per subcommand.

pub mod combine;
pub mod common;
pub mod curate;
pub mod er;
pub mod gen;
pub mod split;
pub mod sweep;
pub mod theorem;

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::output::Outputs;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    TheoremCheck,
    Gen,
    Sweep,
    Er,
    Split,
    Combine,
    Curate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::TheoremCheck => "theorem-check",
            Command::Gen => "gen",
            Command::Sweep => "sweep",
            Command::Er => "er",
            Command::Split => "split",
            Command::Combine => "combine",
            Command::Curate => "curate",
        }
    }
}

/// Runs a command; the outputs are whatever was assembled, also on failure
/// where a structured report exists.
pub fn execute(command: Command, cfg: &ExperimentConfig) -> (Outputs, Result<(), CliError>) {
    fn done<R>(r: Result<(R, Outputs), CliError>) -> (Outputs, Result<(), CliError>) {
        match r {
            Ok((_, out)) => (out, Ok(())),
            Err(e) => (Outputs::default(), Err(e)),
        }
    }
    match command {
        Command::TheoremCheck => theorem::run(cfg),
        Command::Gen => done(gen::run(cfg)),
        Command::Sweep => done(sweep::run(cfg)),
        Command::Er => done(er::run(cfg)),
        Command::Split => done(split::run(cfg)),
        Command::Combine => done(combine::run(cfg)),
        Command::Curate => done(curate::run(cfg)),
    }
}
