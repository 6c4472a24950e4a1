//! File formats, configuration and command implementations behind the
//! `rcal` binary.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod model_file;

pub use error::{CliError, Result};

use cli::{Cli, Command};
use config::FileConfig;

/// Runs one parsed command line.
pub fn run(cli: Cli) -> Result<()> {
    let file = match &cli.global.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let ctx = commands::Context::new(&cli.global, &file)?;
    match cli.command {
        Command::Simulate(a) => commands::simulate::run(&ctx, &a, &file.simulate),
        Command::Select(a) => commands::select::run(&ctx, &a, &file.select),
        Command::Fit(a) => commands::fit::run(&ctx, &a, &file.fit),
        Command::Report(a) => commands::report::run(&ctx, &a),
    }
}
