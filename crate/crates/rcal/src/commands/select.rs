//! `rcal select`: cross-validated ranking of measurement-error model designs,
//! and the simulated out-of-sample prediction comparison.

use std::path::PathBuf;

use rayon::prelude::*;
use rcal_core::data::{Schema, ValidationStudy};
use rcal_core::mem::{self, MemMethod};
use rcal_core::model_select::{self, CvConfig, CvMetrics};
use rcal_core::rng::{self, purpose};
use rcal_core::transforms::{DesignSpec, Variant};
use rcal_core::Error;
use serde::Serialize;

use super::{positive, Context as RunContext};
use crate::cli::SelectArgs;
use crate::config::{self, MethodChoice, QuantileChoice, SelectFile, SplitChoice};
use crate::error::{CliError, Context, Result};
use crate::{io, model_file};

#[derive(Debug, Clone, Serialize)]
pub struct SelectSettings {
    pub validation: Option<PathBuf>,
    pub specs: Option<Vec<String>>,
    pub folds: usize,
    pub split: SplitChoice,
    pub quantiles: QuantileChoice,
    pub method: MethodChoice,
    pub prediction_study: Option<PredictionSettings>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PredictionSettings {
    pub setting: u8,
    pub runs: usize,
    pub n_test: usize,
    pub n2: usize,
    pub sigma2_v: f64,
}

impl SelectSettings {
    pub fn resolve(args: &SelectArgs, file: &SelectFile) -> Result<Self> {
        let prediction_study = if args.prediction_study || file.prediction_study.unwrap_or(false) {
            Some(PredictionSettings {
                setting: args.setting.or(file.setting).unwrap_or(1),
                runs: positive("select.runs", args.runs.or(file.runs).unwrap_or(100))?,
                n_test: positive("select.n_test", args.n_test.or(file.n_test).unwrap_or(10_000))?,
                n2: positive("select.n2", args.n2.or(file.n2).unwrap_or(300))?,
                sigma2_v: args.sigma2_v.or(file.sigma2_v).unwrap_or(0.05),
            })
        } else {
            None
        };
        let s = Self {
            validation: args.validation.clone().or_else(|| file.validation.clone()),
            specs: args.specs.clone().or_else(|| file.specs.clone()),
            folds: args.folds.or(file.folds).unwrap_or(5),
            split: args.split.or(file.split).unwrap_or(SplitChoice::Subject),
            quantiles: args.quantiles.or(file.quantiles).unwrap_or(QuantileChoice::PerFold),
            method: args.method.or(file.method).unwrap_or(MethodChoice::Gee),
            prediction_study,
        };
        if s.folds < 2 {
            return Err(CliError::Usage("select.folds must be at least 2".into()));
        }
        if s.validation.is_none() && s.prediction_study.is_none() {
            return Err(CliError::Usage("select needs --validation, --prediction-study, or both".into()));
        }
        Ok(s)
    }

    fn cv_config(&self) -> CvConfig {
        CvConfig { k: self.folds, method: self.method.into(), level: self.split.into(), quantiles: self.quantiles.into() }
    }
}

/// Table labels: interacting confounders, model family, reduction detail.
pub fn describe(spec: &DesignSpec, schema: &Schema) -> [String; 3] {
    let interactions = if spec.interactions.is_empty() {
        "none".to_string()
    } else {
        spec.interactions.iter().map(|&c| schema.confounders[c].as_str()).collect::<Vec<_>>().join("+")
    };
    let (model, kind) = match spec.variant {
        Variant::Standard => ("standard", "all included".to_string()),
        Variant::SingleRadius(i) => ("standard", format!("only {}", schema.radii[i])),
        Variant::Pca(k) => ("pca", format!("{k} PCs")),
        Variant::Rcs(k) => ("rcs", format!("{k} knots")),
    };
    [interactions, model.into(), kind]
}

fn specs_for(settings: &SelectSettings, schema: &Schema) -> Result<Vec<DesignSpec>> {
    match &settings.specs {
        Some(tokens) => {
            let mut out: Vec<DesignSpec> = Vec::new();
            for t in tokens {
                let spec = config::parse_spec(t, schema)?;
                if !out.contains(&spec) {
                    out.push(spec);
                }
            }
            if out.is_empty() {
                return Err(CliError::Usage("select.specs is empty".into()));
            }
            Ok(out)
        }
        None => Ok(model_select::candidate_grid(&schema.radii, schema.p_w()).into_iter().map(|c| c.spec).collect()),
    }
}

/// A candidate design whose evaluation failed, with the reason.
pub type Failure = (DesignSpec, String);

/// Ranked metrics plus failures, evaluated on the worker pool over one shared
/// fold assignment drawn from the run seed.
pub fn cross_validate(
    pool: &rayon::ThreadPool,
    validation: &ValidationStudy,
    specs: &[DesignSpec],
    cfg: &CvConfig,
    seed: u64,
) -> Result<(Vec<CvMetrics>, Vec<Failure>)> {
    let mut frng = rng::stream(seed, &[purpose::FOLDS]);
    let fold = model_select::kfold_split(validation, cfg.k, cfg.level, &mut frng).context("fold assignment")?;
    let results: Vec<rcal_core::Result<CvMetrics>> =
        pool.install(|| specs.par_iter().map(|s| model_select::cv_evaluate_one(validation, &fold, s, cfg)).collect());
    let mut ranked = Vec::new();
    let mut failed = Vec::new();
    for (spec, r) in specs.iter().zip(results) {
        match r {
            Ok(m) => ranked.push(m),
            Err(e @ (Error::InvalidArgument(_) | Error::DimensionMismatch { .. })) => {
                return Err(e).context(format!("design {spec:?}"));
            }
            Err(e) => failed.push((spec.clone(), e.to_string())),
        }
    }
    model_select::rank_metrics(&mut ranked);
    Ok((ranked, failed))
}

fn run_cv(ctx: &RunContext, pool: &rayon::ThreadPool, settings: &SelectSettings, path: &std::path::Path) -> Result<()> {
    let validation = io::read_validation(path)?;
    let schema = validation.schema().clone();
    let specs = specs_for(settings, &schema)?;
    let cfg = settings.cv_config();
    let (ranked, failed) = cross_validate(pool, &validation, &specs, &cfg, ctx.seed)?;
    let mut rows = Vec::new();
    for (i, m) in ranked.iter().enumerate() {
        let mut row = vec![(i + 1).to_string()];
        row.extend(describe(&m.spec, &schema));
        row.push(config::spec_token(&m.spec, &schema));
        row.extend([m.mae_mean, m.mae_q25, m.mae_q50, m.mae_q75, m.mse_mean, m.qic].map(|v| v.to_string()));
        row.push("ok".into());
        rows.push(row);
    }
    for (spec, reason) in &failed {
        log::warn!("design {} failed: {reason}", config::spec_token(spec, &schema));
        let mut row = vec![String::new()];
        row.extend(describe(spec, &schema));
        row.push(config::spec_token(spec, &schema));
        row.extend(std::iter::repeat_n(String::new(), 6));
        row.push(format!("failed: {reason}"));
        rows.push(row);
    }
    io::write_table(
        &ctx.path("table1.csv"),
        &["rank", "interactions", "model", "type", "spec", "mae", "mae25", "mae50", "mae75", "mse", "qic", "status"],
        &rows,
    )?;
    let best = ranked.first().ok_or_else(|| CliError::format(path, "every candidate design failed"))?;
    let method: MemMethod = settings.method.into();
    let fit = mem::fit(&validation, &best.spec, method).context("refitting the selected design")?;
    model_file::save(&ctx.path("best_mem.json"), &fit)
}

fn run_prediction(ctx: &RunContext, pool: &rayon::ThreadPool, p: &PredictionSettings) -> Result<()> {
    let mut cfg = config::preset(p.setting)?;
    cfg.n2 = p.n2;
    cfg.sigma2_v = p.sigma2_v;
    cfg.seed = ctx.seed;
    cfg.validate().map_err(|e| CliError::Usage(format!("prediction study: {e}")))?;
    let specs = model_select::prediction_specs(cfg.pca_components);
    let runs = pool
        .install(|| {
            (0..p.runs)
                .into_par_iter()
                .map(|r| model_select::prediction_run(&cfg, &specs, p.n_test, r))
                .collect::<rcal_core::Result<Vec<_>>>()
        })
        .context("prediction study")?;
    let schema = cfg.schema();
    let rows: Vec<Vec<String>> = model_select::summarize_predictions(&specs, &runs)
        .iter()
        .map(|s| {
            let [interactions, model, kind] = describe(&s.spec, &schema);
            let mut row = vec![interactions, model, kind];
            row.extend([s.mae_mean, s.mae_q25, s.mae_q50, s.mae_q75, s.mse_mean, s.qic_mean].map(|v| v.to_string()));
            row.extend([s.runs.to_string(), s.failed.to_string()]);
            row
        })
        .collect();
    io::write_table(
        &ctx.path("table5.csv"),
        &["interactions", "model", "type", "mae", "mae25", "mae50", "mae75", "mse", "qic", "runs", "failed"],
        &rows,
    )
}

pub fn run(ctx: &RunContext, args: &SelectArgs, file: &SelectFile) -> Result<()> {
    let settings = SelectSettings::resolve(args, file)?;
    let pool = ctx.pool()?;
    ctx.out_dir()?;
    if let Some(path) = &settings.validation {
        run_cv(ctx, &pool, &settings, path)?;
    }
    if let Some(p) = &settings.prediction_study {
        run_prediction(ctx, &pool, p)?;
    }
    ctx.write_provenance("select", &settings)
}
