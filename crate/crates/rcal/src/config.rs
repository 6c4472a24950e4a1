//! TOML run configuration and its merge with command-line flags.
//!
//! ```toml
//! seed = 7
//! threads = 4
//! out = "results"
//!
//! [simulate]
//! setting = 1
//! cells = "all"
//! replicates = 200
//!
//! [select]
//! specs = ["standard", "pca3", "pca3:w"]
//!
//! [fit]
//! interactions = ["w"]
//! ```
//!
//! Flags override file values, file values override defaults. Unknown keys are
//! rejected.

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use rcal_core::data::Schema;
use rcal_core::mem::{MemMethod, WorkingCorrelation};
use rcal_core::model_select::{QuantileBasis, SplitLevel};
use rcal_core::simulate::SimulationConfig;
use rcal_core::transforms::{DesignSpec, Variant};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const DEFAULT_SEED: u64 = 20240601;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum MethodChoice {
    /// GEE with exchangeable working correlation.
    Gee,
    /// GEE with independence working correlation.
    GeeIndependence,
    Ols,
}

impl From<MethodChoice> for MemMethod {
    fn from(m: MethodChoice) -> Self {
        match m {
            MethodChoice::Gee => MemMethod::Gee(WorkingCorrelation::Exchangeable),
            MethodChoice::GeeIndependence => MemMethod::Gee(WorkingCorrelation::Independence),
            MethodChoice::Ols => MemMethod::Ols,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SplitChoice {
    Subject,
    Row,
}

impl From<SplitChoice> for SplitLevel {
    fn from(s: SplitChoice) -> Self {
        match s {
            SplitChoice::Subject => SplitLevel::Subject,
            SplitChoice::Row => SplitLevel::Row,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum QuantileChoice {
    PerFold,
    PerObservation,
}

impl From<QuantileChoice> for QuantileBasis {
    fn from(q: QuantileChoice) -> Self {
        match q {
            QuantileChoice::PerFold => QuantileBasis::PerFold,
            QuantileChoice::PerObservation => QuantileBasis::PerObservation,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    pub simulate: SimulateFile,
    pub select: SelectFile,
    pub fit: FitFile,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateFile {
    pub setting: Option<u8>,
    pub cells: Option<String>,
    pub replicates: Option<usize>,
    pub interactions: Option<bool>,
    pub occasions: Option<usize>,
    pub pca_components: Option<usize>,
    pub event_rate: Option<Vec<f64>>,
    pub n1: Option<Vec<usize>>,
    pub n2: Option<Vec<usize>>,
    pub sigma2_v: Option<Vec<f64>>,
    pub example_data: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelectFile {
    pub validation: Option<PathBuf>,
    pub specs: Option<Vec<String>>,
    pub folds: Option<usize>,
    pub split: Option<SplitChoice>,
    pub quantiles: Option<QuantileChoice>,
    pub method: Option<MethodChoice>,
    pub prediction_study: Option<bool>,
    pub setting: Option<u8>,
    pub runs: Option<usize>,
    pub n_test: Option<usize>,
    pub n2: Option<usize>,
    pub sigma2_v: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitFile {
    pub main: Option<PathBuf>,
    pub validation: Option<PathBuf>,
    pub mem: Option<PathBuf>,
    pub model: Option<String>,
    pub method: Option<MethodChoice>,
    pub interactions: Option<Vec<String>>,
    pub w0: Option<std::collections::BTreeMap<String, f64>>,
    pub check_derivatives: Option<bool>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {}", path.display(), e.message())))
    }
}

/// One simulation cell: event rate, main size, validation size, MEM noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Cell {
    pub event_rate: f64,
    pub n1: usize,
    pub n2: usize,
    pub sigma2_v: f64,
}

impl Cell {
    pub fn apply(&self, base: &SimulationConfig) -> SimulationConfig {
        let mut cfg = base.clone();
        cfg.event_rate = self.event_rate;
        cfg.n1 = self.n1;
        cfg.n2 = self.n2;
        cfg.sigma2_v = self.sigma2_v;
        cfg
    }
}

pub fn preset(setting: u8) -> Result<SimulationConfig> {
    match setting {
        1 => Ok(SimulationConfig::setting1()),
        2 => Ok(SimulationConfig::setting2()),
        s => Err(CliError::Usage(format!("setting must be 1 or 2, got {s}"))),
    }
}

/// `all` expands the factor lists into their full product (event rate
/// outermost, noise innermost); otherwise a comma-separated list of
/// `p/n1/n2/sigma2v` cells.
pub fn parse_cells(text: &str, event_rate: &[f64], n1: &[usize], n2: &[usize], sigma2_v: &[f64]) -> Result<Vec<Cell>> {
    if text.trim() == "all" {
        let mut cells = Vec::new();
        for &p in event_rate {
            for &a in n1 {
                for &b in n2 {
                    for &s in sigma2_v {
                        cells.push(Cell { event_rate: p, n1: a, n2: b, sigma2_v: s });
                    }
                }
            }
        }
        return Ok(cells);
    }
    text.split(',')
        .map(|item| {
            let bad = || CliError::Usage(format!("cell `{item}`: expected p/n1/n2/sigma2v"));
            let parts: Vec<&str> = item.trim().split('/').collect();
            if parts.len() != 4 {
                return Err(bad());
            }
            Ok(Cell {
                event_rate: parts[0].parse().map_err(|_| bad())?,
                n1: parts[1].parse().map_err(|_| bad())?,
                n2: parts[2].parse().map_err(|_| bad())?,
                sigma2_v: parts[3].parse().map_err(|_| bad())?,
            })
        })
        .collect()
}

/// Parses a design token: `standard`, `r<radius>`, `pca<k>`, `rcs<knots>`,
/// each optionally followed by `:<confounder>` terms for interactions.
pub fn parse_spec(token: &str, schema: &Schema) -> Result<DesignSpec> {
    let bad = |m: String| CliError::Usage(format!("spec `{token}`: {m}"));
    let mut parts = token.trim().split(':');
    let head = parts.next().unwrap_or("");
    let number = |s: &str| s.parse::<usize>().map_err(|_| bad(format!("`{s}` is not a count")));
    let variant = if head == "standard" {
        Variant::Standard
    } else if let Some(k) = head.strip_prefix("pca") {
        Variant::Pca(number(k)?)
    } else if let Some(k) = head.strip_prefix("rcs") {
        Variant::Rcs(number(k)?)
    } else if let Some(r) = head.strip_prefix('r') {
        let radius: f64 = r.parse().map_err(|_| bad(format!("`{r}` is not a radius")))?;
        let idx = schema.radii.iter().position(|&x| x == radius).ok_or_else(|| bad(format!("radius {radius} is not in the data")))?;
        Variant::SingleRadius(idx)
    } else {
        return Err(bad("expected standard, r<radius>, pca<k> or rcs<knots>".into()));
    };
    let mut interactions = Vec::new();
    for name in parts {
        let c = schema.confounders.iter().position(|n| n == name).ok_or_else(|| bad(format!("unknown confounder `{name}`")))?;
        if !interactions.contains(&c) {
            interactions.push(c);
        }
    }
    let spec = DesignSpec::new(variant).with_interactions(interactions);
    spec.validate(schema.p_z(), schema.p_w()).map_err(|e| bad(e.to_string()))?;
    Ok(spec)
}

/// Inverse of [`parse_spec`].
pub fn spec_token(spec: &DesignSpec, schema: &Schema) -> String {
    let mut s = match spec.variant {
        Variant::Standard => "standard".to_string(),
        Variant::SingleRadius(i) => format!("r{}", schema.radii[i]),
        Variant::Pca(k) => format!("pca{k}"),
        Variant::Rcs(k) => format!("rcs{k}"),
    };
    for &c in &spec.interactions {
        s.push(':');
        s.push_str(&schema.confounders[c]);
    }
    s
}
