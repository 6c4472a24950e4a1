//! Measurement error model `E[X | Z, W] = φ(Z, W)ᵀ α` fitted on validation data.
//!
//! Two estimators are provided:
//!
//! * [`fit_ols`] solves the normal equations `Σ φ_i (x_i − φ_iᵀ α) = 0`;
//! * [`fit_gee`] solves `Σ_i Φ_iᵀ V_i⁻¹ (x_i − Φ_i α) = 0` over subjects `i`,
//!   with `V_i = σ² R(ψ)` and `R` either the identity or exchangeable. The
//!   estimate alternates weighted least squares with a moment update of `ψ`,
//!   starting from OLS.
//!
//! Both report the cluster-robust covariance
//! `A⁻¹ (Σ_i U_i U_iᵀ) A⁻¹`, `A = Σ_i Φ_iᵀ R_i⁻¹ Φ_i`, with clusters equal to
//! subjects. The `σ²` factor of `V_i` cancels in the estimate and in this
//! covariance. That matrix is the variance of `α̂` itself (it already carries
//! the `1/N_V` of the asymptotic expansion).
//!
//! QIC uses the Gaussian quasi-likelihood scaled by the Pearson dispersion:
//! `QIC = Σ r² / φ̂ + 2 tr(Ω_I V_R)` with `Ω_I = ΦᵀΦ / φ̂` the independence
//! model information and `V_R` the robust covariance above.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use crate::data::{Schema, ValidationStudy};
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::math;
use crate::tol;
use crate::transforms::{Design, DesignSpec, SurrogateTransform};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum WorkingCorrelation {
    Independence,
    #[default]
    Exchangeable,
}

/// How the measurement error model is estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum MemMethod {
    Ols,
    Gee(WorkingCorrelation),
}

impl Default for MemMethod {
    fn default() -> Self {
        MemMethod::Gee(WorkingCorrelation::Exchangeable)
    }
}

/// Coefficients ordered as the design row: intercept, surrogate block,
/// confounders, interaction blocks.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MemParams {
    pub alpha: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MemFit {
    pub params: MemParams,
    pub method: MemMethod,
    /// Exchangeable correlation (0 under independence or OLS).
    pub psi: f64,
    /// Residual variance: RSS / (n − p).
    pub sigma2: f64,
    /// Robust covariance of `α̂`.
    pub v_alpha: Matrix,
    pub design: Design,
    pub schema: Schema,
    pub n_subjects: usize,
    pub n_obs: usize,
    pub iterations: usize,
}

impl MemFit {
    pub fn n_params(&self) -> usize {
        self.params.alpha.len()
    }

    pub fn column_names(&self) -> Vec<String> {
        self.design.column_names(&self.schema.radii, &self.schema.confounders)
    }
}

/// Design rows stacked subject by subject.
struct Clustered {
    phi: Matrix,
    x: Vec<f64>,
    clusters: Vec<Range<usize>>,
}

fn build_design(validation: &ValidationStudy, spec: &DesignSpec) -> Result<(Design, Clustered)> {
    let schema = validation.schema();
    spec.validate(schema.p_z(), schema.p_w())?;
    if validation.is_empty() {
        return Err(Error::InvalidArgument("empty validation study".into()));
    }
    let subjects = validation.subjects();
    let order: Vec<usize> = subjects.iter().flat_map(|(_, rows)| rows.iter().copied()).collect();
    let records = validation.records();
    let zmat = Matrix::from_rows(&order.iter().map(|&i| records[i].z.as_slice()).collect::<Vec<_>>());
    let transform = SurrogateTransform::fit(spec, &zmat, &schema.radii)?;
    let design = Design::new(spec.clone(), transform, schema.p_w())?;

    let q = design.len();
    let mut phi = Matrix::zeros(order.len(), q);
    let mut x = Vec::with_capacity(order.len());
    for (k, &i) in order.iter().enumerate() {
        let row = design.row(&records[i].z, &records[i].w)?;
        phi.row_mut(k).copy_from_slice(&row);
        x.push(records[i].x);
    }
    let mut clusters = Vec::with_capacity(subjects.len());
    let mut start = 0;
    for (_, rows) in &subjects {
        clusters.push(start..start + rows.len());
        start += rows.len();
    }
    Ok((design, Clustered { phi, x, clusters }))
}

fn gram(phi: &Matrix) -> Matrix {
    let q = phi.cols();
    let mut g = Matrix::zeros(q, q);
    for i in 0..phi.rows() {
        let r = phi.row(i);
        g.add_outer(1.0, r, r);
    }
    g
}

/// Cholesky of the Gram matrix, naming the first collinear column on failure.
fn singular(design: &Design, schema: &Schema, pivot: usize) -> Error {
    Error::SingularDesign {
        column: design.column_names(&schema.radii, &schema.confounders).get(pivot).cloned().unwrap_or_default(),
        index: pivot,
    }
}

fn gram_cholesky(g: &Matrix, design: &Design, schema: &Schema) -> Result<Matrix> {
    linalg::cholesky_relative(g, tol::COLLINEARITY).map_err(|e| match e {
        Error::NotPositiveDefinite { pivot } => singular(design, schema, pivot),
        other => other,
    })
}

/// Exchangeable inverse `R⁻¹ = a I + b J` for a cluster of size `m`.
fn exchangeable_inverse(psi: f64, m: usize) -> (f64, f64) {
    if psi == 0.0 {
        return (1.0, 0.0);
    }
    let a = 1.0 / (1.0 - psi);
    let b = -psi / ((1.0 - psi) * (1.0 + (m as f64 - 1.0) * psi));
    (a, b)
}

/// `(Σ Φ_iᵀ R_i⁻¹ Φ_i, Σ Φ_iᵀ R_i⁻¹ v_i)` for a per-row vector `v`.
fn weighted_normal_equations(data: &Clustered, psi: f64, v: &[f64]) -> (Matrix, Vec<f64>) {
    let q = data.phi.cols();
    let mut a = Matrix::zeros(q, q);
    let mut rhs = vec![0.0; q];
    let mut colsum = vec![0.0; q];
    for c in &data.clusters {
        let (wa, wb) = exchangeable_inverse(psi, c.len());
        colsum.iter_mut().for_each(|s| *s = 0.0);
        let mut vsum = 0.0;
        for k in c.clone() {
            let r = data.phi.row(k);
            a.add_outer(wa, r, r);
            linalg::axpy(wa * v[k], r, &mut rhs);
            linalg::axpy(1.0, r, &mut colsum);
            vsum += v[k];
        }
        if wb != 0.0 {
            a.add_outer(wb, &colsum, &colsum);
            linalg::axpy(wb * vsum, &colsum, &mut rhs);
        }
    }
    (a, rhs)
}

/// `Σ_i U_i U_iᵀ` with `U_i = Φ_iᵀ R_i⁻¹ r_i`.
fn score_outer(data: &Clustered, psi: f64, resid: &[f64]) -> Matrix {
    let q = data.phi.cols();
    let mut b = Matrix::zeros(q, q);
    let mut u = vec![0.0; q];
    let mut colsum = vec![0.0; q];
    for c in &data.clusters {
        let (wa, wb) = exchangeable_inverse(psi, c.len());
        u.iter_mut().for_each(|s| *s = 0.0);
        colsum.iter_mut().for_each(|s| *s = 0.0);
        let mut rsum = 0.0;
        for k in c.clone() {
            let r = data.phi.row(k);
            linalg::axpy(wa * resid[k], r, &mut u);
            linalg::axpy(1.0, r, &mut colsum);
            rsum += resid[k];
        }
        linalg::axpy(wb * rsum, &colsum, &mut u);
        b.add_outer(1.0, &u, &u);
    }
    b
}

fn residuals(data: &Clustered, alpha: &[f64]) -> Vec<f64> {
    data.x.iter().enumerate().map(|(k, x)| x - linalg::dot(data.phi.row(k), alpha)).collect()
}

fn finish(
    validation: &ValidationStudy,
    design: Design,
    data: &Clustered,
    alpha: Vec<f64>,
    psi: f64,
    method: MemMethod,
    iterations: usize,
) -> Result<MemFit> {
    let (n, q) = (data.phi.rows(), data.phi.cols());
    let resid = residuals(data, &alpha);
    let rss: f64 = resid.iter().map(|r| r * r).sum();
    let sigma2 = if n > q { rss / (n - q) as f64 } else { 0.0 };
    let (a, _) = weighted_normal_equations(data, psi, &data.x);
    let b = score_outer(data, psi, &resid);
    let v_alpha = linalg::sandwich(&a, &b)?;
    Ok(MemFit {
        params: MemParams { alpha },
        method,
        psi,
        sigma2,
        v_alpha,
        design,
        schema: validation.schema().clone(),
        n_subjects: data.clusters.len(),
        n_obs: n,
        iterations,
    })
}

fn ols_alpha(data: &Clustered, design: &Design, schema: &Schema) -> Result<Vec<f64>> {
    gram_cholesky(&gram(&data.phi), design, schema)?;
    linalg::lstsq(&data.phi, &data.x)
}

/// `R_i^{-1/2}` applied cluster by cluster to the design and the response.
/// On a cluster of size `m` it scales deviations from the cluster mean by
/// `1/√(1−ψ)` and the mean itself by `1/√(1+(m−1)ψ)`.
fn whitened(data: &Clustered, psi: f64) -> (Matrix, Vec<f64>) {
    let q = data.phi.cols();
    let mut phi = data.phi.clone();
    let mut x = data.x.clone();
    let mut mean = vec![0.0; q];
    for c in &data.clusters {
        let m = c.len() as f64;
        let s_dev = 1.0 / math::sqrt(1.0 - psi);
        let s_mean = 1.0 / math::sqrt(1.0 + (m - 1.0) * psi);
        mean.iter_mut().for_each(|v| *v = 0.0);
        let mut x_mean = 0.0;
        for k in c.clone() {
            linalg::axpy(1.0 / m, data.phi.row(k), &mut mean);
            x_mean += data.x[k] / m;
        }
        for k in c.clone() {
            for (v, mu) in phi.row_mut(k).iter_mut().zip(&mean) {
                *v = s_dev * *v + (s_mean - s_dev) * mu;
            }
            x[k] = s_dev * x[k] + (s_mean - s_dev) * x_mean;
        }
    }
    (phi, x)
}

/// Ordinary least squares with subject-clustered robust covariance.
pub fn fit_ols(validation: &ValidationStudy, spec: &DesignSpec) -> Result<MemFit> {
    let (design, data) = build_design(validation, spec)?;
    let alpha = ols_alpha(&data, &design, validation.schema())?;
    finish(validation, design, &data, alpha, 0.0, MemMethod::Ols, 1)
}

/// GEE with identity link and Gaussian variance.
pub fn fit_gee(validation: &ValidationStudy, spec: &DesignSpec, working: WorkingCorrelation) -> Result<MemFit> {
    let (design, data) = build_design(validation, spec)?;
    let schema = validation.schema();
    let mut alpha = ols_alpha(&data, &design, schema)?;
    let method = MemMethod::Gee(working);
    if working == WorkingCorrelation::Independence {
        return finish(validation, design, &data, alpha, 0.0, method, 1);
    }
    let q = data.phi.cols();
    let mut last_change = f64::INFINITY;
    for iteration in 1..=tol::GEE_MAX_ITER {
        let resid = residuals(&data, &alpha);
        let groups: Vec<&[f64]> = data.clusters.iter().map(|c| &resid[c.clone()]).collect();
        let psi = estimate_psi(&groups, q);
        let (phi_w, x_w) = whitened(&data, psi);
        let next = linalg::lstsq(&phi_w, &x_w).map_err(|e| match e {
            Error::NotPositiveDefinite { pivot } => singular(&design, schema, pivot),
            other => other,
        })?;
        last_change = next.iter().zip(&alpha).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        alpha = next;
        log::trace!("GEE iteration {iteration}: psi {psi}, max change {last_change:e}");
        if last_change < tol::GEE_STEP {
            return finish(validation, design, &data, alpha, psi, method, iteration);
        }
    }
    Err(Error::NoConvergence { what: "GEE", iterations: tol::GEE_MAX_ITER, last_change })
}

pub fn fit(validation: &ValidationStudy, spec: &DesignSpec, method: MemMethod) -> Result<MemFit> {
    match method {
        MemMethod::Ols => fit_ols(validation, spec),
        MemMethod::Gee(w) => fit_gee(validation, spec, w),
    }
}

/// Moment estimator of the exchangeable correlation: the mean within-subject
/// residual cross product over `σ̂² = Σ r² / (N − p)`, clamped to `[0, 0.99]`.
pub fn estimate_psi(groups: &[&[f64]], n_params: usize) -> f64 {
    let n: usize = groups.iter().map(|g| g.len()).sum();
    let rss: f64 = groups.iter().flat_map(|g| g.iter()).map(|r| r * r).sum();
    let mut cross = 0.0;
    let mut pairs = 0usize;
    for g in groups {
        let s: f64 = g.iter().sum();
        let ss: f64 = g.iter().map(|r| r * r).sum();
        cross += 0.5 * (s * s - ss);
        pairs += g.len() * g.len().saturating_sub(1) / 2;
    }
    if pairs == 0 {
        log::warn!("no subject has repeated measurements; exchangeable correlation set to 0");
        return 0.0;
    }
    if n <= n_params || rss == 0.0 {
        return 0.0;
    }
    let sigma2 = rss / (n - n_params) as f64;
    let psi = cross / pairs as f64 / sigma2;
    if !(0.0..=tol::PSI_MAX).contains(&psi) {
        let clamped = psi.clamp(0.0, tol::PSI_MAX);
        log::warn!("exchangeable correlation {psi:.4} clamped to {clamped}");
        return clamped;
    }
    psi
}

/// Calibrated exposure `φ(z, w)ᵀ α̂`.
pub fn predict_mu(fit: &MemFit, z: &[f64], w: &[f64]) -> Result<f64> {
    Ok(linalg::dot(&fit.design.row(z, w)?, &fit.params.alpha))
}

/// Pieces of the QIC for one fit evaluated on a validation study.
#[derive(Debug, Clone, PartialEq)]
pub struct QicTerms {
    /// Gaussian quasi-likelihood `−½ Σ r²`.
    pub quasi_likelihood: f64,
    /// Pearson dispersion `Σ r² / (N − p)`.
    pub dispersion: f64,
    /// `tr(Ω_I V_R)`.
    pub trace: f64,
    pub qic: f64,
}

pub fn qic_terms(fit: &MemFit, validation: &ValidationStudy) -> Result<QicTerms> {
    let (n, q) = (validation.len(), fit.n_params());
    let mut omega = Matrix::zeros(q, q);
    let mut rss = 0.0;
    for r in validation.records() {
        let phi = fit.design.row(&r.z, &r.w)?;
        omega.add_outer(1.0, &phi, &phi);
        let e = r.x - linalg::dot(&phi, &fit.params.alpha);
        rss += e * e;
    }
    gram_cholesky(&omega, &fit.design, validation.schema())?;
    let scale_x: f64 = validation.records().iter().map(|r| r.x * r.x).sum();
    // residuals at rounding level count as an exact fit
    let exact = rss <= 1e-24 * scale_x.max(f64::MIN_POSITIVE);
    let dispersion = if n > q && !exact { rss / (n - q) as f64 } else { 0.0 };
    let quasi_likelihood = -0.5 * rss;
    let scale = if dispersion > 0.0 { 1.0 / dispersion } else { 1.0 };
    let trace = omega.scale(scale).matmul(&fit.v_alpha).trace();
    let q_term = if dispersion > 0.0 { -2.0 * quasi_likelihood / dispersion } else { 0.0 };
    Ok(QicTerms { quasi_likelihood, dispersion, trace, qic: q_term + 2.0 * trace })
}

pub fn qic(fit: &MemFit, validation: &ValidationStudy) -> Result<f64> {
    Ok(qic_terms(fit, validation)?.qic)
}
