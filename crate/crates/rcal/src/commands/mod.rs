pub mod fit;
pub mod report;
pub mod select;
pub mod simulate;

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::cli::GlobalArgs;
use crate::config::{FileConfig, DEFAULT_SEED};
use crate::error::{CliError, Result};

/// Settings shared by every command.
#[derive(Debug, Clone)]
pub struct Context {
    pub seed: u64,
    pub threads: usize,
    pub out: PathBuf,
}

impl Context {
    pub fn new(flags: &GlobalArgs, file: &FileConfig) -> Result<Self> {
        Ok(Self {
            seed: flags.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
            threads: flags.threads.or(file.threads).unwrap_or(0),
            out: flags.out.clone().or_else(|| file.out.clone()).unwrap_or_else(|| PathBuf::from(".")),
        })
    }

    /// Worker pool of the configured size.
    pub fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.threads)
            .build()
            .map_err(|e| CliError::Usage(format!("cannot start {} worker threads: {e}", self.threads)))
    }

    pub fn out_dir(&self) -> Result<&Path> {
        std::fs::create_dir_all(&self.out).map_err(|e| CliError::io(&self.out, e))?;
        Ok(&self.out)
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    /// Echoes the effective settings. The thread count is left out so the
    /// file is identical across pool sizes.
    pub fn write_provenance<S: Serialize>(&self, command: &str, settings: &S) -> Result<()> {
        #[derive(Serialize)]
        struct Provenance<'a, S> {
            tool: &'static str,
            version: &'static str,
            command: &'a str,
            seed: u64,
            settings: &'a S,
        }
        let path = self.path("provenance.json");
        let p = Provenance { tool: env!("CARGO_PKG_NAME"), version: env!("CARGO_PKG_VERSION"), command, seed: self.seed, settings };
        let mut text = serde_json::to_string_pretty(&p).map_err(|e| CliError::format(&path, e.to_string()))?;
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))
    }
}

fn positive(name: &str, v: usize) -> Result<usize> {
    if v == 0 {
        return Err(CliError::Usage(format!("{name} must be positive")));
    }
    Ok(v)
}
