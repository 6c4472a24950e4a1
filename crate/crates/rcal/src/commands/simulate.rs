//! `rcal simulate`: replicate grid over cells, run on the worker pool.

use rayon::prelude::*;
use rcal_core::rng::{self, purpose};
use rcal_core::simulate::{self, ModelOutcome, ParamSummary, ReplicateResult, SimulationConfig, SimulationSummary};
use serde::Serialize;

use super::{positive, Context as RunContext};
use crate::cli::SimulateArgs;
use crate::config::{self, Cell, SimulateFile};
use crate::error::{CliError, Context, Result};
use crate::io;

const EVENT_RATES: [f64; 2] = [0.035, 0.10];
const N1: [usize; 2] = [5000, 10000];
const N2: [usize; 2] = [150, 300];
const SIGMA2_V: [f64; 3] = [0.01, 0.05, 0.10];

#[derive(Debug, Clone, Serialize)]
pub struct SimulateSettings {
    pub setting: u8,
    pub replicates: usize,
    pub mem_interactions: bool,
    pub occasions: usize,
    pub pca_components: usize,
    pub cells: Vec<Cell>,
    pub example_data: bool,
}

impl SimulateSettings {
    pub fn resolve(args: &SimulateArgs, file: &SimulateFile) -> Result<Self> {
        let cells_text = args.cells.clone().or_else(|| file.cells.clone()).unwrap_or_else(|| "all".into());
        let cells = config::parse_cells(
            &cells_text,
            file.event_rate.as_deref().unwrap_or(&EVENT_RATES),
            file.n1.as_deref().unwrap_or(&N1),
            file.n2.as_deref().unwrap_or(&N2),
            file.sigma2_v.as_deref().unwrap_or(&SIGMA2_V),
        )?;
        if cells.is_empty() {
            return Err(CliError::Usage("simulate.cells selects no cells".into()));
        }
        let preset = SimulationConfig::setting1();
        Ok(Self {
            setting: args.setting.or(file.setting).unwrap_or(1),
            replicates: positive("simulate.replicates", args.replicates.or(file.replicates).unwrap_or(preset.replicates))?,
            mem_interactions: !args.no_interactions && file.interactions.unwrap_or(true),
            occasions: positive("simulate.occasions", args.occasions.or(file.occasions).unwrap_or(preset.occasions))?,
            pca_components: positive(
                "simulate.pca_components",
                args.pca_components.or(file.pca_components).unwrap_or(preset.pca_components),
            )?,
            cells,
            example_data: args.example_data || file.example_data.unwrap_or(false),
        })
    }

    /// One validated generator configuration per cell.
    pub fn cell_configs(&self, seed: u64) -> Result<Vec<SimulationConfig>> {
        let mut base = config::preset(self.setting)?;
        base.replicates = self.replicates;
        base.mem_interactions = self.mem_interactions;
        base.occasions = self.occasions;
        base.pca_components = self.pca_components;
        base.seed = seed;
        self.cells
            .iter()
            .map(|c| {
                let cfg = c.apply(&base);
                cfg.validate().map_err(|e| CliError::Usage(format!("cell {}/{}/{}/{}: {e}", c.event_rate, c.n1, c.n2, c.sigma2_v)))?;
                if cfg.pca_components > cfg.p_z() {
                    return Err(CliError::Usage(format!(
                        "simulate.pca_components = {} exceeds the {} radii",
                        cfg.pca_components,
                        cfg.p_z()
                    )));
                }
                Ok(cfg)
            })
            .collect()
    }
}

/// Every cell's summary and replicate results, in cell order.
pub fn run_grid(pool: &rayon::ThreadPool, cfgs: &[SimulationConfig]) -> Result<Vec<(SimulationSummary, Vec<ReplicateResult>)>> {
    pool.install(|| {
        let cmax: Vec<f64> = cfgs.par_iter().map(simulate::cell_cmax).collect::<rcal_core::Result<_>>().context("censoring calibration")?;
        let jobs: Vec<(usize, usize)> = cfgs.iter().enumerate().flat_map(|(c, cfg)| (0..cfg.replicates).map(move |r| (c, r))).collect();
        let results: Vec<ReplicateResult> = jobs
            .par_iter()
            .map(|&(c, r)| simulate::run_replicate(&cfgs[c], cmax[c], r))
            .collect::<rcal_core::Result<_>>()
            .context("replicate generation")?;
        let mut out = Vec::with_capacity(cfgs.len());
        let mut rest = results.as_slice();
        for (c, cfg) in cfgs.iter().enumerate() {
            let (mine, tail) = rest.split_at(cfg.replicates);
            rest = tail;
            out.push((simulate::summarize(cfg, cmax[c], mine), mine.to_vec()));
        }
        Ok(out)
    })
}

fn cell_cells(s: &SimulationSummary) -> Vec<String> {
    vec![s.event_rate.to_string(), s.n1.to_string(), s.n2.to_string(), s.sigma2_v.to_string()]
}

fn param_cells(p: Option<&ParamSummary>) -> [String; 4] {
    match p {
        Some(p) => [p.bias_pct.to_string(), p.sd.to_string(), p.se_mean.to_string(), p.coverage_pct.to_string()],
        None => std::array::from_fn(|_| "NA".into()),
    }
}

fn write_outputs(ctx: &RunContext, grid: &[(SimulationSummary, Vec<ReplicateResult>)]) -> Result<()> {
    let mut summary = Vec::new();
    let mut detail = Vec::new();
    let mut reps = Vec::new();
    for (s, results) in grid {
        for m in &s.models {
            if m.flagged {
                log::warn!(
                    "cell {}/{}/{}/{} model {}: {} of {} replicates failed",
                    s.event_rate,
                    s.n1,
                    s.n2,
                    s.sigma2_v,
                    m.model.label(),
                    m.n_failed,
                    m.n_failed + m.n_converged
                );
            }
            let mut row = cell_cells(s);
            row.push(m.model.label().into());
            row.extend(param_cells(m.beta1.as_ref()));
            summary.push(row);
            for (name, p) in [("beta1", &m.beta1), ("beta3", &m.beta3)] {
                let mut row = cell_cells(s);
                row.push(u8::from(s.mem_interactions).to_string());
                row.push(m.model.label().into());
                row.push(name.into());
                match p {
                    Some(p) => {
                        row.extend([p.truth, p.mean, p.bias_pct, p.bias_pct_signed, p.sd, p.se_mean, p.coverage_pct].map(|v| v.to_string()))
                    }
                    None => row.extend(std::iter::repeat_n("NA".to_string(), 7)),
                }
                row.extend([
                    m.n_converged.to_string(),
                    m.n_failed.to_string(),
                    u8::from(m.flagged).to_string(),
                    s.cmax.to_string(),
                    s.mean_event_rate.to_string(),
                ]);
                detail.push(row);
            }
        }
        for r in results {
            for (model, outcome) in &r.outcomes {
                let mut row = cell_cells(s);
                row.extend([r.replicate.to_string(), r.event_rate.to_string(), model.label().into()]);
                match outcome {
                    ModelOutcome::Converged { beta1, beta3, psi } => {
                        row.push("ok".into());
                        for e in [beta1, beta3] {
                            row.extend([e.estimate.to_string(), e.se.to_string(), u8::from(e.covers).to_string()]);
                        }
                        row.push(psi.to_string());
                    }
                    ModelOutcome::Failed { reason } => {
                        row.push(format!("failed: {reason}"));
                        row.extend(std::iter::repeat_n(String::new(), 7));
                    }
                }
                reps.push(row);
            }
        }
    }
    io::write_table(&ctx.path("summary.csv"), &["p", "n1", "n2", "sigma2v", "model", "bias_pct", "sd", "se", "coverage"], &summary)?;
    io::write_table(
        &ctx.path("detail.csv"),
        &[
            "p",
            "n1",
            "n2",
            "sigma2v",
            "interactions",
            "model",
            "param",
            "truth",
            "mean",
            "bias_pct",
            "bias_pct_signed",
            "sd",
            "se",
            "coverage",
            "n_converged",
            "n_failed",
            "flagged",
            "cmax",
            "mean_event_rate",
        ],
        &detail,
    )?;
    io::write_table(
        &ctx.path("replicates.csv"),
        &[
            "p",
            "n1",
            "n2",
            "sigma2v",
            "replicate",
            "event_rate",
            "model",
            "status",
            "beta1",
            "se1",
            "covers1",
            "beta3",
            "se3",
            "covers3",
            "psi",
        ],
        &reps,
    )
}

fn write_example_data(ctx: &RunContext, cfg: &SimulationConfig, cmax: f64) -> Result<()> {
    let cell = cfg.cell_key();
    let mut vrng = rng::stream(cfg.seed, &[cell, 0, purpose::VALIDATION]);
    let mut mrng = rng::stream(cfg.seed, &[cell, 0, purpose::MAIN]);
    let validation = simulate::gen_validation(cfg, &mut vrng).context("validation study")?;
    let (main, _) = simulate::gen_main(cfg, &mut mrng, cmax).context("main study")?;
    io::write_validation(&ctx.path("validation.csv"), &validation)?;
    io::write_main(&ctx.path("main.csv"), &main)
}

pub fn run(ctx: &RunContext, args: &SimulateArgs, file: &SimulateFile) -> Result<()> {
    let settings = SimulateSettings::resolve(args, file)?;
    let cfgs = settings.cell_configs(ctx.seed)?;
    let pool = ctx.pool()?;
    ctx.out_dir()?;
    log::info!("{} cells x {} replicates", cfgs.len(), settings.replicates);
    let grid = run_grid(&pool, &cfgs)?;
    write_outputs(ctx, &grid)?;
    if settings.example_data {
        write_example_data(ctx, &cfgs[0], grid[0].0.cmax)?;
    }
    ctx.write_provenance("simulate", &settings)
}
