//! Monte Carlo engine: validation and main-study generators, censoring
//! calibration, per-replicate fits and cell summaries.
//!
//! Every draw comes from [`rng::stream`] keyed by the run seed, a cell key
//! derived from `(n1, n2, event_rate, sigma2_v)`, the replicate index and a
//! purpose tag, so replicates can run in any order on any number of workers.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::distr::Open01;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::coxph::{CoxLayout, CoxParams};
use crate::data::{MainStudy, Schema, SubjectId, SurvivalRecord, ValidationRecord, ValidationStudy};
use crate::error::{Error, Result};
use crate::inference;
use crate::linalg::{self, Matrix};
use crate::math;
use crate::mem::{self, MemMethod, WorkingCorrelation};
use crate::rng::{self, purpose};
use crate::tol;
use crate::transforms::{DesignSpec, Variant};

pub const DEFAULT_RADII: [f64; 9] = [90.0, 150.0, 270.0, 510.0, 750.0, 990.0, 1230.0, 1500.0, 2100.0];

/// Full simulation design for one cell.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SimulationConfig {
    pub n1: usize,
    pub n2: usize,
    pub occasions: usize,
    pub event_rate: f64,
    pub sigma2_v: f64,
    pub radii: Vec<f64>,
    /// Generating MEM coefficients `(α₀, α₁ᵀ, α₂, α₃ᵀ)`: standard design with
    /// every surrogate interacting with the single confounder.
    pub alpha: Vec<f64>,
    pub beta: CoxParams,
    pub theta: f64,
    pub nu: f64,
    pub z_mean: Vec<f64>,
    pub z_cov: Matrix,
    pub w_mean: f64,
    pub w_var: f64,
    /// Include surrogate-by-confounder terms in the fitted MEMs.
    pub mem_interactions: bool,
    pub pca_components: usize,
    pub working: WorkingCorrelation,
    pub replicates: usize,
    pub seed: u64,
}

/// Default surrogate distribution: mean 0.45, SD 0.10, correlation `0.95^|i−j|`.
pub fn default_z_moments(p: usize) -> (Vec<f64>, Matrix) {
    let sd = 0.10;
    let cov = Matrix::from_fn(p, p, |i, j| sd * sd * math::powf(0.95, (i as f64 - j as f64).abs()));
    (vec![0.45; p], cov)
}

impl SimulationConfig {
    fn with_coefficients(alpha: Vec<f64>, beta: [f64; 3]) -> Self {
        let (z_mean, z_cov) = default_z_moments(DEFAULT_RADII.len());
        Self {
            n1: 5000,
            n2: 300,
            occasions: 8,
            event_rate: 0.035,
            sigma2_v: 0.01,
            radii: DEFAULT_RADII.to_vec(),
            alpha,
            beta: CoxParams { beta1: beta[0], beta2: vec![beta[1]], beta3: vec![beta[2]] },
            theta: 10.0,
            nu: 1.0,
            z_mean,
            z_cov,
            w_mean: 1.0,
            w_var: 10.0,
            mem_interactions: true,
            pca_components: 3,
            working: WorkingCorrelation::Exchangeable,
            replicates: 100,
            seed: 20240601,
        }
    }

    /// Coefficients mimicking the motivating cohort.
    pub fn setting1() -> Self {
        let mut alpha = vec![0.105];
        alpha.extend([0.184, 0.068, 0.290, -0.246, 0.311, -0.613, 0.381, 0.276, -0.103]);
        alpha.push(-0.006);
        alpha.extend([-0.038, -0.080, -0.056, 0.215, -0.247, 0.309, -0.058, -0.121, 0.052]);
        Self::with_coefficients(alpha, [-0.284, -0.049, -0.047])
    }

    /// Alternating-sign coefficients with a strong exposure effect.
    pub fn setting2() -> Self {
        let sign = |k: usize| if k.is_multiple_of(2) { 1.0 } else { -1.0 };
        let mut alpha = vec![0.05];
        alpha.extend((0..9).map(|k| 0.5 * sign(k)));
        alpha.push(0.1);
        alpha.extend((0..9).map(|k| 0.05 * sign(k)));
        Self::with_coefficients(alpha, [1.0, 0.1, 0.1])
    }

    pub fn p_z(&self) -> usize {
        self.radii.len()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        let p = self.p_z();
        if self.n1 == 0 || self.n2 < 2 || self.occasions == 0 {
            return bad("n1, n2 and occasions must be positive (n2 at least 2)");
        }
        if !(self.event_rate > 0.0 && self.event_rate < 1.0) {
            return bad("event_rate must lie in (0, 1)");
        }
        if self.sigma2_v.is_nan() || self.sigma2_v <= 0.0 || self.w_var.is_nan() || self.w_var < 0.0 {
            return bad("sigma2_v must be positive and w_var non-negative");
        }
        if !(self.theta > 0.0 && self.nu > 0.0) {
            return bad("Weibull shape and scale must be positive");
        }
        if self.alpha.len() != 2 * p + 2 {
            return Err(Error::DimensionMismatch {
                context: "generating alpha (1 + p_z + 1 + p_z)",
                expected: 2 * p + 2,
                found: self.alpha.len(),
            });
        }
        if self.beta.beta2.len() != 1 || self.beta.beta3.len() != 1 {
            return bad("the generator has one confounder: beta2 and beta3 need one entry each");
        }
        if self.z_mean.len() != p || self.z_cov.rows() != p || self.z_cov.cols() != p {
            return Err(Error::DimensionMismatch { context: "surrogate moments", expected: p, found: self.z_mean.len() });
        }
        Schema::new(self.radii.clone(), vec![String::from("w")])?;
        linalg::cholesky(&self.z_cov)?;
        Ok(())
    }

    pub fn schema(&self) -> Schema {
        Schema { radii: self.radii.clone(), confounders: vec![String::from("w")] }
    }

    /// Identifies the cell in random stream keys.
    pub fn cell_key(&self) -> u64 {
        let mut h = 0xcbf2_9ce4_8422_2325u64;
        for v in [self.n1 as u64, self.n2 as u64, self.occasions as u64, self.event_rate.to_bits(), self.sigma2_v.to_bits()] {
            h = (h ^ v).wrapping_mul(0x0000_0100_0000_01b3);
        }
        h
    }

    fn generating_mu(&self, z: &[f64], w: f64) -> f64 {
        let p = self.p_z();
        let a = &self.alpha;
        let mut mu = a[0] + a[p + 1] * w;
        for k in 0..p {
            mu += z[k] * (a[1 + k] + a[p + 2 + k] * w);
        }
        mu
    }

    fn eta(&self, x: f64, w: f64) -> f64 {
        let b = &self.beta;
        b.beta1 * x + b.beta2[0] * w + b.beta3[0] * x * w
    }
}

/// `n` rows of `mean + L ε`, `ε` standard normal.
pub fn mvn_sample<R: Rng + ?Sized>(rng: &mut R, mean: &[f64], cov_cholesky: &Matrix, n: usize) -> Matrix {
    let p = mean.len();
    let mut out = Matrix::zeros(n, p);
    let mut e = vec![0.0; p];
    for i in 0..n {
        e.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
        let row = out.row_mut(i);
        for a in 0..p {
            let l = cov_cholesky.row(a);
            row[a] = mean[a] + linalg::dot(&l[..=a], &e[..=a]);
        }
    }
    out
}

/// Surrogates, confounder and latent exposure for `n` rows.
struct Covariates {
    z: Matrix,
    w: Vec<f64>,
    x: Vec<f64>,
}

fn draw_covariates<R: Rng + ?Sized>(cfg: &SimulationConfig, chol: &Matrix, rng: &mut R, n: usize) -> Covariates {
    let z = mvn_sample(rng, &cfg.z_mean, chol, n);
    let w_sd = math::sqrt(cfg.w_var);
    let s_v = math::sqrt(cfg.sigma2_v);
    let mut w = Vec::with_capacity(n);
    let mut x = Vec::with_capacity(n);
    for i in 0..n {
        let wi = cfg.w_mean + w_sd * rng.sample::<f64, _>(StandardNormal);
        let e: f64 = rng.sample(StandardNormal);
        x.push(cfg.generating_mu(z.row(i), wi) + s_v * e);
        w.push(wi);
    }
    Covariates { z, w, x }
}

/// `n2` subjects with `occasions` rows each; surrogates and confounder are
/// drawn afresh for every row and errors are independent.
pub fn gen_validation<R: Rng + ?Sized>(cfg: &SimulationConfig, rng: &mut R) -> Result<ValidationStudy> {
    let chol = linalg::cholesky(&cfg.z_cov)?;
    let c = draw_covariates(cfg, &chol, rng, cfg.n2 * cfg.occasions);
    let records = (0..c.x.len())
        .map(|i| ValidationRecord {
            id: SubjectId((i / cfg.occasions) as u64),
            occasion: (i % cfg.occasions) as u32 + 1,
            x: c.x[i],
            z: c.z.row(i).to_vec(),
            w: vec![c.w[i]],
        })
        .collect();
    ValidationStudy::new(cfg.schema(), records)
}

/// `n` independent single-occasion rows, e.g. a prediction test set.
pub fn gen_exposure_sample<R: Rng + ?Sized>(cfg: &SimulationConfig, rng: &mut R, n: usize) -> Result<ValidationStudy> {
    let chol = linalg::cholesky(&cfg.z_cov)?;
    let c = draw_covariates(cfg, &chol, rng, n);
    let records = (0..n)
        .map(|i| ValidationRecord { id: SubjectId(i as u64), occasion: 1, x: c.x[i], z: c.z.row(i).to_vec(), w: vec![c.w[i]] })
        .collect();
    ValidationStudy::new(cfg.schema(), records)
}

/// Inverse of the survival function `exp(−(ν t)^θ e^η)` at `u`.
pub fn weibull_inverse(u: f64, eta: f64, theta: f64, nu: f64) -> f64 {
    math::powf(-math::ln(u) * math::exp(-eta), 1.0 / theta) / nu
}

pub fn weibull_event_time<R: Rng + ?Sized>(rng: &mut R, eta: f64, theta: f64, nu: f64) -> f64 {
    weibull_inverse(rng.sample(Open01), eta, theta, nu)
}

/// Pilot event times with the uniform fractions that scale the censoring bound.
pub struct Pilot {
    pub event_times: Vec<f64>,
    pub censor_fraction: Vec<f64>,
}

impl Pilot {
    pub fn draw<R: Rng + ?Sized>(cfg: &SimulationConfig, rng: &mut R, n: usize) -> Result<Self> {
        let chol = linalg::cholesky(&cfg.z_cov)?;
        let c = draw_covariates(cfg, &chol, rng, n);
        let event_times = (0..n).map(|i| weibull_event_time(rng, cfg.eta(c.x[i], c.w[i]), cfg.theta, cfg.nu)).collect();
        let censor_fraction = (0..n).map(|_| rng.sample(Open01)).collect();
        Ok(Self { event_times, censor_fraction })
    }

    /// Fraction of subjects with `T⁰ ≤ C_max · V`.
    pub fn event_rate(&self, cmax: f64) -> f64 {
        let events = self.event_times.iter().zip(&self.censor_fraction).filter(|(t, v)| **t <= cmax * **v).count();
        events as f64 / self.event_times.len() as f64
    }
}

/// Bisection for the censoring bound on a fixed pilot.
pub fn calibrate_cmax_on(pilot: &Pilot, target: f64) -> Result<f64> {
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut doublings = 0;
    while pilot.event_rate(hi) < target {
        lo = hi;
        hi *= 2.0;
        doublings += 1;
        if doublings > tol::CMAX_MAX_ITER {
            return Err(Error::CalibrationBracket { target, low: 0.0, high: pilot.event_rate(hi) });
        }
    }
    for _ in 0..tol::CMAX_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        if pilot.event_rate(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let achieved = pilot.event_rate(hi);
    if (achieved - target).abs() > tol::CMAX_RATE {
        return Err(Error::CalibrationBracket { target, low: pilot.event_rate(lo), high: achieved });
    }
    Ok(hi)
}

/// Censoring bound reaching the configured event rate on a 50,000-subject pilot.
pub fn calibrate_cmax<R: Rng + ?Sized>(cfg: &SimulationConfig, rng: &mut R) -> Result<f64> {
    let pilot = Pilot::draw(cfg, rng, tol::CMAX_PILOT)?;
    calibrate_cmax_on(&pilot, cfg.event_rate)
}

/// Main study plus the latent exposure of every subject.
pub fn gen_main<R: Rng + ?Sized>(cfg: &SimulationConfig, rng: &mut R, cmax: f64) -> Result<(MainStudy, Vec<f64>)> {
    let chol = linalg::cholesky(&cfg.z_cov)?;
    let c = draw_covariates(cfg, &chol, rng, cfg.n1);
    let mut records = Vec::with_capacity(cfg.n1);
    for i in 0..cfg.n1 {
        let t0 = weibull_event_time(rng, cfg.eta(c.x[i], c.w[i]), cfg.theta, cfg.nu);
        let censor = cmax * rng.sample::<f64, _>(Open01);
        records.push(SurvivalRecord {
            id: SubjectId(i as u64),
            z: c.z.row(i).to_vec(),
            w: vec![c.w[i]],
            time: t0.min(censor),
            event: t0 <= censor,
        });
    }
    Ok((MainStudy::new(cfg.schema(), records)?, c.x))
}

/// MEM reductions compared in the simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum SimModel {
    Standard,
    Pca,
}

impl SimModel {
    pub const ALL: [SimModel; 2] = [SimModel::Standard, SimModel::Pca];

    pub fn label(self) -> &'static str {
        match self {
            SimModel::Standard => "standard",
            SimModel::Pca => "pca",
        }
    }

    pub fn spec(self, cfg: &SimulationConfig) -> DesignSpec {
        let variant = match self {
            SimModel::Standard => Variant::Standard,
            SimModel::Pca => Variant::Pca(cfg.pca_components),
        };
        let spec = DesignSpec::new(variant);
        if cfg.mem_interactions {
            spec.with_interactions(vec![0])
        } else {
            spec
        }
    }
}

/// One coefficient's estimate from one replicate.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Estimate {
    pub estimate: f64,
    pub se: f64,
    pub covers: bool,
}

impl Estimate {
    fn new(estimate: f64, se: f64, truth: f64) -> Self {
        let (lo, hi) = inference::wald_ci(&[estimate], &[se]);
        Self { estimate, se, covers: lo[0] <= truth && truth <= hi[0] }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum ModelOutcome {
    Converged { beta1: Estimate, beta3: Estimate, psi: f64 },
    Failed { reason: String },
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ReplicateResult {
    pub replicate: usize,
    pub event_rate: f64,
    pub outcomes: Vec<(SimModel, ModelOutcome)>,
}

fn fit_model(cfg: &SimulationConfig, model: SimModel, validation: &ValidationStudy, main: &MainStudy) -> Result<ModelOutcome> {
    let mem = mem::fit(validation, &model.spec(cfg), MemMethod::Gee(cfg.working))?;
    let layout = CoxLayout::new(1, vec![0])?;
    let fit = inference::fit_calibrated(main, &mem, &layout)?;
    Ok(ModelOutcome::Converged {
        beta1: Estimate::new(fit.params.beta1, fit.se[0], cfg.beta.beta1),
        beta3: Estimate::new(fit.params.beta3[0], fit.se[2], cfg.beta.beta3[0]),
        psi: mem.psi,
    })
}

/// Generates one replicate's studies and fits every model; failures are
/// recorded, not propagated.
pub fn run_replicate(cfg: &SimulationConfig, cmax: f64, replicate: usize) -> Result<ReplicateResult> {
    let cell = cfg.cell_key();
    let mut vrng = rng::stream(cfg.seed, &[cell, replicate as u64, purpose::VALIDATION]);
    let mut mrng = rng::stream(cfg.seed, &[cell, replicate as u64, purpose::MAIN]);
    let validation = gen_validation(cfg, &mut vrng)?;
    let (main, _) = gen_main(cfg, &mut mrng, cmax)?;
    let outcomes = SimModel::ALL
        .iter()
        .map(|&m| {
            let outcome = fit_model(cfg, m, &validation, &main).unwrap_or_else(|e| {
                log::debug!("replicate {replicate} {}: {e}", m.label());
                ModelOutcome::Failed { reason: e.to_string() }
            });
            (m, outcome)
        })
        .collect();
    Ok(ReplicateResult { replicate, event_rate: main.n_events() as f64 / main.len() as f64, outcomes })
}

/// Calibrates the censoring bound for a cell from its own pilot stream.
pub fn cell_cmax(cfg: &SimulationConfig) -> Result<f64> {
    let mut prng = rng::stream(cfg.seed, &[cfg.cell_key(), purpose::PILOT]);
    calibrate_cmax(cfg, &mut prng)
}

/// Replicate summary of one coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ParamSummary {
    pub truth: f64,
    pub mean: f64,
    /// `100 |mean − truth| / |truth|`.
    pub bias_pct: f64,
    pub bias_pct_signed: f64,
    pub sd: f64,
    pub se_mean: f64,
    pub coverage_pct: f64,
}

fn summarize_param(values: &[Estimate], truth: f64) -> ParamSummary {
    let n = values.len() as f64;
    let mean = values.iter().map(|v| v.estimate).sum::<f64>() / n;
    let var =
        if values.len() > 1 { values.iter().map(|v| (v.estimate - mean) * (v.estimate - mean)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    let signed = 100.0 * (mean - truth) / truth.abs();
    ParamSummary {
        truth,
        mean,
        bias_pct: signed.abs(),
        bias_pct_signed: signed,
        sd: math::sqrt(var),
        se_mean: values.iter().map(|v| v.se).sum::<f64>() / n,
        coverage_pct: 100.0 * values.iter().filter(|v| v.covers).count() as f64 / n,
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ModelSummary {
    pub model: SimModel,
    pub beta1: Option<ParamSummary>,
    pub beta3: Option<ParamSummary>,
    pub n_converged: usize,
    pub n_failed: usize,
    /// More than 5% of replicates failed.
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SimulationSummary {
    pub n1: usize,
    pub n2: usize,
    pub event_rate: f64,
    pub sigma2_v: f64,
    pub mem_interactions: bool,
    pub cmax: f64,
    pub mean_event_rate: f64,
    pub models: Vec<ModelSummary>,
}

impl SimulationSummary {
    pub fn model(&self, m: SimModel) -> Option<&ModelSummary> {
        self.models.iter().find(|s| s.model == m)
    }
}

/// Aggregates replicate results; the order of `results` does not matter.
pub fn summarize(cfg: &SimulationConfig, cmax: f64, results: &[ReplicateResult]) -> SimulationSummary {
    let mut sorted: Vec<&ReplicateResult> = results.iter().collect();
    sorted.sort_by_key(|r| r.replicate);
    let models = SimModel::ALL
        .iter()
        .map(|&m| {
            let mut b1 = Vec::new();
            let mut b3 = Vec::new();
            let mut failed = 0;
            for r in &sorted {
                match r.outcomes.iter().find(|(k, _)| *k == m).map(|(_, o)| o) {
                    Some(ModelOutcome::Converged { beta1, beta3, .. }) => {
                        b1.push(*beta1);
                        b3.push(*beta3);
                    }
                    _ => failed += 1,
                }
            }
            let total = b1.len() + failed;
            ModelSummary {
                model: m,
                beta1: (!b1.is_empty()).then(|| summarize_param(&b1, cfg.beta.beta1)),
                beta3: (!b3.is_empty()).then(|| summarize_param(&b3, cfg.beta.beta3[0])),
                n_converged: b1.len(),
                n_failed: failed,
                flagged: total > 0 && failed as f64 > tol::FAILED_REPLICATE_FRACTION * total as f64,
            }
        })
        .collect();
    let mean_event_rate = if sorted.is_empty() { 0.0 } else { sorted.iter().map(|r| r.event_rate).sum::<f64>() / sorted.len() as f64 };
    SimulationSummary {
        n1: cfg.n1,
        n2: cfg.n2,
        event_rate: cfg.event_rate,
        sigma2_v: cfg.sigma2_v,
        mem_interactions: cfg.mem_interactions,
        cmax,
        mean_event_rate,
        models,
    }
}

/// Runs every replicate of a cell in sequence.
pub fn run_cell(cfg: &SimulationConfig) -> Result<(SimulationSummary, Vec<ReplicateResult>)> {
    cfg.validate()?;
    let cmax = cell_cmax(cfg)?;
    let results = (0..cfg.replicates).map(|r| run_replicate(cfg, cmax, r)).collect::<Result<Vec<_>>>()?;
    Ok((summarize(cfg, cmax, &results), results))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        SimulationConfig::setting1().validate().unwrap();
        SimulationConfig::setting2().validate().unwrap();
        let s2 = SimulationConfig::setting2();
        assert_eq!(&s2.alpha[1..4], &[0.5, -0.5, 0.5]);
        assert_eq!(s2.alpha[11..13], [0.05, -0.05]);
    }

    #[test]
    fn validation_shape() {
        let mut cfg = SimulationConfig::setting1();
        cfg.n2 = 150;
        let v = gen_validation(&cfg, &mut rng::stream(1, &[1])).unwrap();
        assert_eq!(v.len(), 1200);
        assert_eq!(v.n_subjects(), 150);
    }

    #[test]
    fn setting2_intercept() {
        let cfg = SimulationConfig::setting2();
        assert_eq!(cfg.generating_mu(&[0.0; 9], 0.0), 0.05);
    }

    #[test]
    fn weibull_exponential_reduction() {
        // theta = 1: rate e^eta, mean e^-eta
        let mut r = rng::stream(3, &[]);
        let eta = 0.4;
        let n = 200_000;
        let mean = (0..n).map(|_| weibull_event_time(&mut r, eta, 1.0, 1.0)).sum::<f64>() / n as f64;
        assert!((mean / (-eta).exp() - 1.0).abs() < 0.01);
    }

    #[test]
    fn weibull_monotone_in_eta() {
        for u in [0.01, 0.3, 0.9] {
            assert!(weibull_inverse(u, 1.0, 10.0, 1.0) < weibull_inverse(u, 0.0, 10.0, 1.0));
        }
    }

    #[test]
    fn cmax_matches_grid_scan() {
        let cfg = SimulationConfig::setting1();
        let pilot = Pilot::draw(&cfg, &mut rng::stream(5, &[]), 20_000).unwrap();
        let cmax = calibrate_cmax_on(&pilot, 0.10).unwrap();
        let grid = (1..10_000).map(|k| k as f64 * 1e-3).find(|&c| pilot.event_rate(c) >= 0.10).unwrap();
        assert!((cmax - grid).abs() <= 1e-3);
        assert!(pilot.event_rate(cmax) >= pilot.event_rate(0.9 * cmax));
    }

    #[test]
    fn unreachable_rate_reports_bracket() {
        let pilot = Pilot { event_times: vec![1.0; 10], censor_fraction: vec![0.5; 10] };
        // rate jumps from 0 to 1 at C = 2
        assert!(matches!(calibrate_cmax_on(&pilot, 0.5), Err(Error::CalibrationBracket { .. })));
    }

    #[test]
    fn summary_arithmetic() {
        let cfg = SimulationConfig::setting1();
        let est = |b: f64| Estimate { estimate: b, se: 0.5, covers: b > -0.5 };
        let results: Vec<ReplicateResult> = [-0.2, -0.4, -0.6]
            .iter()
            .enumerate()
            .map(|(i, &b)| ReplicateResult {
                replicate: i,
                event_rate: 0.1,
                outcomes: vec![
                    (SimModel::Standard, ModelOutcome::Converged { beta1: est(b), beta3: est(0.0), psi: 0.0 }),
                    (SimModel::Pca, ModelOutcome::Failed { reason: "x".into() }),
                ],
            })
            .collect();
        let s = summarize(&cfg, 1.0, &results);
        let m1 = s.model(SimModel::Standard).unwrap().beta1.unwrap();
        assert!((m1.mean + 0.4).abs() < 1e-15);
        assert!((m1.bias_pct - 100.0 * 0.116 / 0.284).abs() < 1e-9);
        assert!(m1.bias_pct_signed < 0.0);
        assert!((m1.sd - 0.2).abs() < 1e-15);
        assert!((m1.coverage_pct - 200.0 / 3.0).abs() < 1e-12);
        let m2 = s.model(SimModel::Pca).unwrap();
        assert!(m2.flagged && m2.beta1.is_none() && m2.n_failed == 3);
    }
}
