//! Versioned JSON file holding a fitted measurement-error model, so `select`
//! and `fit` can share a calibration without refitting.

use std::path::Path;

use rcal_core::mem::MemFit;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const FORMAT: &str = "rcal-mem";
pub const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Envelope {
    format: String,
    version: u32,
    fit: MemFit,
}

pub fn save(path: &Path, fit: &MemFit) -> Result<()> {
    let env = Envelope { format: FORMAT.into(), version: VERSION, fit: fit.clone() };
    let mut text = serde_json::to_string_pretty(&env).map_err(|e| CliError::format(path, e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn load(path: &Path) -> Result<MemFit> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| CliError::format(path, e.to_string()))?;
    match (value.get("format").and_then(|v| v.as_str()), value.get("version").and_then(|v| v.as_u64())) {
        (Some(FORMAT), Some(v)) if v == u64::from(VERSION) => {}
        (Some(FORMAT), v) => return Err(CliError::format(path, format!("unsupported version {v:?}, expected {VERSION}"))),
        _ => return Err(CliError::format(path, format!("not an `{FORMAT}` file"))),
    }
    let env: Envelope = serde_json::from_value(value).map_err(|e| CliError::format(path, e.to_string()))?;
    let fit = env.fit;
    if fit.params.alpha.len() != fit.design.len() || fit.v_alpha.rows() != fit.design.len() {
        return Err(CliError::format(path, "coefficient count does not match the design"));
    }
    Ok(fit)
}
