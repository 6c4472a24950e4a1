//! Cross-validated comparison of measurement error model specifications.
//!
//! Folds group subjects by default, so repeated occasions of one person never
//! straddle a train/test split. Transforms (PCA loadings, spline bases) are
//! refit on every training fold.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::data::ValidationStudy;
use crate::error::{Error, Result};
use crate::mem::{self, MemFit, MemMethod};
use crate::rng::{self, purpose};
use crate::simulate::{self, SimulationConfig};
use crate::transforms::{DesignSpec, Variant};

/// Unit that is assigned to a fold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum SplitLevel {
    #[default]
    Subject,
    Row,
}

/// What the MAE quantile columns summarize.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum QuantileBasis {
    /// Quantiles of the `k` per-fold MAEs.
    #[default]
    PerFold,
    /// Quantiles of the pooled absolute errors.
    PerObservation,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CvConfig {
    pub k: usize,
    pub method: MemMethod,
    pub level: SplitLevel,
    pub quantiles: QuantileBasis,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self { k: 5, method: MemMethod::default(), level: SplitLevel::Subject, quantiles: QuantileBasis::PerFold }
    }
}

/// Fold index of every record.
pub fn kfold_split<R: Rng + ?Sized>(validation: &ValidationStudy, k: usize, level: SplitLevel, rng: &mut R) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 folds, got {k}")));
    }
    let units: Vec<Vec<usize>> = match level {
        SplitLevel::Subject => validation.subjects().into_iter().map(|(_, rows)| rows).collect(),
        SplitLevel::Row => (0..validation.len()).map(|i| vec![i]).collect(),
    };
    if units.len() < k {
        return Err(Error::TooFewSubjects { subjects: units.len(), folds: k });
    }
    let mut perm: Vec<usize> = (0..units.len()).collect();
    perm.shuffle(rng);
    let mut fold = vec![0; validation.len()];
    for (pos, &u) in perm.iter().enumerate() {
        for &row in &units[u] {
            fold[row] = pos % k;
        }
    }
    Ok(fold)
}

/// Type-7 (linear interpolation) sample quantile of sorted data.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CvMetrics {
    pub spec: DesignSpec,
    /// Pooled mean absolute prediction error over all held-out rows.
    pub mae_mean: f64,
    pub mae_q25: f64,
    pub mae_q50: f64,
    pub mae_q75: f64,
    pub mse_mean: f64,
    /// From the fit on all validation data.
    pub qic: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvReport {
    /// Ascending by MAE, ties broken by QIC.
    pub ranked: Vec<CvMetrics>,
    pub failed: Vec<(DesignSpec, String)>,
}

fn held_out_errors(validation: &ValidationStudy, fold: &[usize], k: usize, spec: &DesignSpec, method: MemMethod) -> Result<Vec<Vec<f64>>> {
    (0..k)
        .map(|f| {
            let train: Vec<usize> = (0..fold.len()).filter(|&i| fold[i] != f).collect();
            let fit = mem::fit(&validation.subset(&train), spec, method)?;
            validation
                .records()
                .iter()
                .zip(fold)
                .filter(|(_, &g)| g == f)
                .map(|(r, _)| Ok(r.x - mem::predict_mu(&fit, &r.z, &r.w)?))
                .collect()
        })
        .collect()
}

fn evaluate_spec(validation: &ValidationStudy, fold: &[usize], spec: &DesignSpec, cfg: &CvConfig) -> Result<CvMetrics> {
    let errors = held_out_errors(validation, fold, cfg.k, spec, cfg.method)?;
    let all: Vec<f64> = errors.iter().flatten().copied().collect();
    let n = all.len() as f64;
    let mae_mean = all.iter().map(|e| e.abs()).sum::<f64>() / n;
    let mse_mean = all.iter().map(|e| e * e).sum::<f64>() / n;
    let basis = match cfg.quantiles {
        QuantileBasis::PerFold => {
            errors.iter().filter(|e| !e.is_empty()).map(|e| e.iter().map(|v| v.abs()).sum::<f64>() / e.len() as f64).collect()
        }
        QuantileBasis::PerObservation => all.iter().map(|e| e.abs()).collect(),
    };
    let basis = sorted(basis);
    let full = mem::fit(validation, spec, cfg.method)?;
    Ok(CvMetrics {
        spec: spec.clone(),
        mae_mean,
        mae_q25: quantile(&basis, 0.25),
        mae_q50: quantile(&basis, 0.50),
        mae_q75: quantile(&basis, 0.75),
        mse_mean,
        qic: mem::qic(&full, validation)?,
    })
}

fn rank(a: &CvMetrics, b: &CvMetrics) -> Ordering {
    a.mae_mean.total_cmp(&b.mae_mean).then(a.qic.total_cmp(&b.qic))
}

/// Scores every spec on one shared fold assignment.
pub fn cv_evaluate<R: Rng + ?Sized>(validation: &ValidationStudy, specs: &[DesignSpec], cfg: &CvConfig, rng: &mut R) -> Result<CvReport> {
    let fold = kfold_split(validation, cfg.k, cfg.level, rng)?;
    let mut ranked = Vec::new();
    let mut failed = Vec::new();
    for spec in specs {
        match evaluate_spec(validation, &fold, spec, cfg) {
            Ok(m) => ranked.push(m),
            Err(e @ (Error::InvalidArgument(_) | Error::DimensionMismatch { .. })) => return Err(e),
            Err(e) => failed.push((spec.clone(), e.to_string())),
        }
    }
    ranked.sort_by(rank);
    Ok(CvReport { ranked, failed })
}

/// Per-spec evaluation with a precomputed fold assignment, for callers that
/// parallelize over specs.
pub fn cv_evaluate_one(validation: &ValidationStudy, fold: &[usize], spec: &DesignSpec, cfg: &CvConfig) -> Result<CvMetrics> {
    evaluate_spec(validation, fold, spec, cfg)
}

pub fn rank_metrics(metrics: &mut [CvMetrics]) {
    metrics.sort_by(rank);
}

/// A row of the candidate grid with its table labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub spec: DesignSpec,
    /// Interacting confounder, if any.
    pub interaction: Option<usize>,
    pub model: &'static str,
    pub kind: String,
}

/// Standard on all radii, each of the first four radii alone, PCA with 2 and
/// 3 components, splines with 3 to 7 knots; then, for every confounder, the
/// standard and both PCA designs with that confounder's interaction block.
pub fn candidate_grid(radii: &[f64], p_w: usize) -> Vec<Candidate> {
    let plain = |spec: DesignSpec, model, kind: String| Candidate { spec, interaction: None, model, kind };
    let mut out = vec![plain(DesignSpec::standard(), "standard", "all included".into())];
    for (i, r) in radii.iter().enumerate().take(4) {
        out.push(plain(DesignSpec::new(Variant::SingleRadius(i)), "standard", format!("only {r}")));
    }
    for k in [2, 3].into_iter().filter(|&k| k <= radii.len()) {
        out.push(plain(DesignSpec::pca(k), "pca", format!("{k} PCs")));
    }
    for knots in (3..=7).filter(|&n| n <= radii.len()) {
        out.push(plain(DesignSpec::rcs(knots), "rcs", format!("{knots} knots")));
    }
    for c in 0..p_w {
        for (spec, model) in
            [(DesignSpec::standard(), "standard"), (DesignSpec::pca(2), "pca (2 PCs)"), (DesignSpec::pca(3), "pca (3 PCs)")]
        {
            if let Variant::Pca(k) = spec.variant {
                if k > radii.len() {
                    continue;
                }
            }
            out.push(Candidate { spec: spec.with_interactions(vec![c]), interaction: Some(c), model, kind: String::new() });
        }
    }
    out
}

/// Out-of-sample prediction metrics of one spec, averaged over runs.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PredictionSummary {
    pub spec: DesignSpec,
    pub runs: usize,
    pub failed: usize,
    pub mae_mean: f64,
    pub mae_q25: f64,
    pub mae_q50: f64,
    pub mae_q75: f64,
    pub mse_mean: f64,
    pub qic_mean: f64,
}

/// One run's `(mae, mse, qic)` per spec; a failed fit fails only its own entry.
pub type RunMetrics = Vec<Result<(f64, f64, f64)>>;

pub fn prediction_run(cfg: &SimulationConfig, specs: &[DesignSpec], n_test: usize, run: usize) -> Result<RunMetrics> {
    let cell = cfg.cell_key();
    let mut vrng = rng::stream(cfg.seed, &[cell, run as u64, purpose::VALIDATION]);
    let mut trng = rng::stream(cfg.seed, &[cell, run as u64, purpose::TEST]);
    let validation = simulate::gen_validation(cfg, &mut vrng)?;
    let test = simulate::gen_exposure_sample(cfg, &mut trng, n_test)?;
    Ok(specs
        .iter()
        .map(|spec| {
            let fit: MemFit = mem::fit(&validation, spec, MemMethod::Gee(cfg.working))?;
            let (mut abs, mut sq) = (0.0, 0.0);
            for r in test.records() {
                let e = r.x - mem::predict_mu(&fit, &r.z, &r.w)?;
                abs += e.abs();
                sq += e * e;
            }
            let n = test.len() as f64;
            Ok((abs / n, sq / n, mem::qic(&fit, &validation)?))
        })
        .collect())
}

/// Aggregates [`prediction_run`] outputs (indexed `[run][spec]`).
pub fn summarize_predictions(specs: &[DesignSpec], runs: &[RunMetrics]) -> Vec<PredictionSummary> {
    specs
        .iter()
        .enumerate()
        .map(|(s, spec)| {
            let ok: Vec<(f64, f64, f64)> = runs.iter().filter_map(|r| r[s].as_ref().ok().copied()).collect();
            let n = ok.len() as f64;
            let maes = sorted(ok.iter().map(|m| m.0).collect());
            PredictionSummary {
                spec: spec.clone(),
                runs: ok.len(),
                failed: runs.len() - ok.len(),
                mae_mean: maes.iter().sum::<f64>() / n,
                mae_q25: quantile(&maes, 0.25),
                mae_q50: quantile(&maes, 0.50),
                mae_q75: quantile(&maes, 0.75),
                mse_mean: ok.iter().map(|m| m.1).sum::<f64>() / n,
                qic_mean: ok.iter().map(|m| m.2).sum::<f64>() / n,
            }
        })
        .collect()
}

/// Standard and PCA designs, each without and with the confounder interaction.
pub fn prediction_specs(pca_components: usize) -> Vec<DesignSpec> {
    vec![
        DesignSpec::standard(),
        DesignSpec::pca(pca_components),
        DesignSpec::standard().with_interactions(vec![0]),
        DesignSpec::pca(pca_components).with_interactions(vec![0]),
    ]
}

/// Sequential prediction study over `runs` simulated validation/test pairs.
pub fn prediction_study(cfg: &SimulationConfig, n_test: usize, runs: usize) -> Result<Vec<PredictionSummary>> {
    cfg.validate()?;
    let specs = prediction_specs(cfg.pca_components);
    let results = (0..runs).map(|r| prediction_run(cfg, &specs, n_test, r)).collect::<Result<Vec<_>>>()?;
    Ok(summarize_predictions(&specs, &results))
}
