//! Covariance of the calibrated hazard coefficients.
//!
//! With `Î = −N⁻¹ ∂U/∂β`, `Ĝ` the mean outer product of the robust score
//! residuals, `Û_α = ∂U/∂α` (an unnormalized sum over subjects) and
//! `V̂_α = Var(α̂)` from the measurement error model fit,
//!
//! ```text
//! Var(β̂) = N⁻¹ Î⁻¹ [Ĝ + N⁻¹ Û_α V̂_α Û_αᵀ] Î⁻¹
//! ```
//!
//! The second term carries the calibration uncertainty; the validation and
//! main studies are independent, so there is no cross term.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::coxph::{self, CoxData, CoxLayout, CoxParams, CoxReport};
use crate::data::MainStudy;
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::math;
use crate::mem::MemFit;
use crate::tol;

/// Pieces of the sandwich.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SandwichComponents {
    /// Information per subject, `−N⁻¹ ∂U/∂β`.
    pub i_beta: Matrix,
    pub g_beta: Matrix,
    /// `d_β × d_α`.
    pub u_alpha: Matrix,
    pub v_alpha: Matrix,
    pub n: usize,
    pub n_v: usize,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CoxFit {
    pub params: CoxParams,
    pub layout: CoxLayout,
    pub covariance: Matrix,
    pub se: Vec<f64>,
    pub ci_lower: Vec<f64>,
    pub ci_upper: Vec<f64>,
    pub components: SandwichComponents,
    pub report: CoxReport,
}

impl CoxFit {
    pub fn beta(&self) -> Vec<f64> {
        self.params.to_vec()
    }

    /// Model-based covariance `(N Î)⁻¹` that ignores calibration and misspecification.
    pub fn naive_covariance(&self) -> Result<Matrix> {
        let n = self.components.n as f64;
        Ok(linalg::inverse_spd(&self.components.i_beta)?.scale(1.0 / n))
    }
}

/// `N⁻¹ Σ_i R_i R_iᵀ` with the robust residual
/// `R_i = D_i (u_i − ū(T_i)) − Σ_{events k : T_k ≤ T_i} e^{η_i} / S⁽⁰⁾_k · (u_i − ū_k)`,
/// `ū = S⁽¹⁾/S⁽⁰⁾`.
pub fn g_beta_hat(data: &CoxData, beta: &[f64]) -> Result<Matrix> {
    let residuals = score_residuals(data, beta)?;
    let d = data.dim();
    let mut g = Matrix::zeros(d, d);
    for r in &residuals {
        g.add_outer(1.0, r, r);
    }
    if !data.is_empty() {
        g = g.scale(1.0 / data.len() as f64);
    }
    Ok(g.symmetrized())
}

/// Robust score residuals in sorted order; they sum to the score.
pub(crate) fn score_residuals(data: &CoxData, beta: &[f64]) -> Result<Vec<Vec<f64>>> {
    let d = data.dim();
    if beta.len() != d {
        return Err(Error::DimensionMismatch { context: "beta", expected: d, found: beta.len() });
    }
    let n = data.len();
    let (eta, shift) = data.linear_predictors(beta);
    let r: Vec<f64> = eta.iter().map(|e| math::exp(e - shift)).collect();

    // ū and event count for each tie group, from the descending sweep
    let mut ubar = vec![Vec::new(); data.groups.len()];
    let mut s0s = vec![0.0; data.groups.len()];
    let mut events = vec![0usize; data.groups.len()];
    let (mut s0, mut s1) = (0.0, vec![0.0; d]);
    for (g, &(start, end)) in data.groups.iter().enumerate() {
        for p in start..end {
            s0 += r[p];
            linalg::axpy(r[p], data.u.row(p), &mut s1);
        }
        events[g] = (start..end).filter(|&p| data.event[p]).count();
        s0s[g] = s0;
        ubar[g] = s1.iter().map(|v| v / s0).collect();
    }

    // ascending sweep: H0 = Σ m_k / S0_k, H1 = Σ m_k ū_k / S0_k over T_k ≤ current time
    let mut out = vec![vec![0.0; d]; n];
    let (mut h0, mut h1) = (0.0, vec![0.0; d]);
    for g in (0..data.groups.len()).rev() {
        let (start, end) = data.groups[g];
        if events[g] > 0 {
            let w = events[g] as f64 / s0s[g];
            h0 += w;
            linalg::axpy(w, &ubar[g], &mut h1);
        }
        for p in start..end {
            let u = data.u.row(p);
            let res = &mut out[p];
            for k in 0..d {
                let own = if data.event[p] { u[k] - ubar[g][k] } else { 0.0 };
                res[k] = own - r[p] * (u[k] * h0 - h1[k]);
            }
        }
    }
    Ok(out)
}

/// Analytic `∂U/∂α` for `μ_i = φ_iᵀ α`. `phi` has one row per subject in the
/// order the Cox data were built from.
pub fn u_alpha_hat(data: &CoxData, beta: &[f64], phi: &Matrix) -> Result<Matrix> {
    let d = data.dim();
    let q = phi.cols();
    if phi.rows() != data.len() {
        return Err(Error::DimensionMismatch { context: "u_alpha_hat design rows", expected: data.len(), found: phi.rows() });
    }
    if beta.len() != d {
        return Err(Error::DimensionMismatch { context: "beta", expected: d, found: beta.len() });
    }
    let layout = data.layout();
    let (eta, shift) = data.linear_predictors(beta);

    let mut s0 = 0.0;
    let mut s1 = vec![0.0; d];
    let mut a1 = Matrix::zeros(d, q);
    let mut a2 = Matrix::zeros(d, q);
    let mut a3 = vec![0.0; q];
    let mut out = Matrix::zeros(d, q);
    for &(start, end) in &data.groups {
        for p in start..end {
            let w = math::exp(eta[p] - shift);
            let u = data.u.row(p);
            let c = layout.d_row_d_mu(u);
            let g = linalg::dot(&c, beta);
            let f = phi.row(data.order[p]);
            s0 += w;
            linalg::axpy(w, u, &mut s1);
            a1.add_outer(w, &c, f);
            a2.add_outer(w * g, u, f);
            linalg::axpy(w * g, f, &mut a3);
        }
        for p in (start..end).filter(|&p| data.event[p]) {
            let c = layout.d_row_d_mu(data.u.row(p));
            let f = phi.row(data.order[p]);
            for a in 0..d {
                for b in 0..q {
                    out[(a, b)] += c[a] * f[b] - (a1[(a, b)] + a2[(a, b)]) / s0 + (s1[a] / s0) * (a3[b] / s0);
                }
            }
        }
    }
    Ok(out)
}

/// Assembles `N⁻¹ Î⁻¹ [Ĝ + (N N_V)⁻¹ Û (N_V V̂) Ûᵀ] Î⁻¹`, symmetrized.
///
/// `N_V V̂` is the covariance of `√N_V (α̂ − α)`, so the calibration term
/// reduces to `N⁻¹ Û V̂ Ûᵀ`.
pub fn sandwich_covariance(c: &SandwichComponents) -> Result<Matrix> {
    if c.n == 0 || c.n_v == 0 {
        return Err(Error::InvalidArgument("sample sizes must be positive".into()));
    }
    let (n, n_v) = (c.n as f64, c.n_v as f64);
    let calibration = c.u_alpha.matmul(&c.v_alpha.scale(n_v)).matmul(&c.u_alpha.transpose());
    let middle = c.g_beta.add(&calibration.scale(1.0 / (n * n_v)));
    Ok(linalg::sandwich(&c.i_beta, &middle.symmetrized())?.scale(1.0 / n).symmetrized())
}

/// `β̂ ± 1.959964·se`.
pub fn wald_ci(estimate: &[f64], se: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let lo = estimate.iter().zip(se).map(|(b, s)| b - tol::Z_975 * s).collect();
    let hi = estimate.iter().zip(se).map(|(b, s)| b + tol::Z_975 * s).collect();
    (lo, hi)
}

/// Calibrated main-study rows and the MEM design rows behind them.
pub struct CalibratedData {
    pub cox: CoxData,
    pub phi: Matrix,
}

pub fn calibrate(main: &MainStudy, mem: &MemFit, layout: &CoxLayout) -> Result<CalibratedData> {
    calibrate_with_alpha(main, mem, layout, &mem.params.alpha)
}

fn calibrate_with_alpha(main: &MainStudy, mem: &MemFit, layout: &CoxLayout, alpha: &[f64]) -> Result<CalibratedData> {
    if main.schema().p_w() != layout.p_w {
        return Err(Error::DimensionMismatch { context: "Cox layout confounders", expected: main.schema().p_w(), found: layout.p_w });
    }
    let n = main.len();
    let mut phi = Matrix::zeros(n, mem.design.len());
    let mut u = Matrix::zeros(n, layout.dim());
    for (i, r) in main.records().iter().enumerate() {
        let row = mem.design.row(&r.z, &r.w)?;
        let mu = linalg::dot(&row, alpha);
        phi.row_mut(i).copy_from_slice(&row);
        u.row_mut(i).copy_from_slice(&layout.row(mu, &r.w)?);
    }
    let cox = CoxData::from_parts(layout.clone(), &u, &main.times(), &main.events())?;
    Ok(CalibratedData { cox, phi })
}

/// Fits the calibrated Cox model and its two-stage sandwich covariance.
pub fn fit_calibrated(main: &MainStudy, mem: &MemFit, layout: &CoxLayout) -> Result<CoxFit> {
    let data = calibrate(main, mem, layout)?;
    let est = coxph::fit(&data.cox, None)?;
    let n = data.cox.len();
    let components = SandwichComponents {
        i_beta: est.information.scale(1.0 / n as f64),
        g_beta: g_beta_hat(&data.cox, &est.beta)?,
        u_alpha: u_alpha_hat(&data.cox, &est.beta, &data.phi)?,
        v_alpha: mem.v_alpha.clone(),
        n,
        n_v: mem.n_subjects,
    };
    let covariance = sandwich_covariance(&components)?;
    let se: Vec<f64> = covariance.diag().iter().map(|v| math::sqrt(v.max(0.0))).collect();
    let (ci_lower, ci_upper) = wald_ci(&est.beta, &se);
    Ok(CoxFit { params: est.params, layout: layout.clone(), covariance, se, ci_lower, ci_upper, components, report: est.report })
}

/// Agreement between the analytic `Û_α` and central differences of the score in α.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeCheck {
    pub analytic: Matrix,
    pub numeric: Matrix,
    /// `max |analytic − numeric| / max(max |analytic|, 1e-300)`.
    pub relative_error: f64,
}

/// Component `b` is stepped by `step / max(1, max_i |φ_ib|)`.
pub fn check_u_alpha(main: &MainStudy, mem: &MemFit, layout: &CoxLayout, beta: &[f64], step: f64) -> Result<DerivativeCheck> {
    let base = calibrate(main, mem, layout)?;
    let analytic = u_alpha_hat(&base.cox, beta, &base.phi)?;
    let q = mem.params.alpha.len();
    let mut numeric = Matrix::zeros(layout.dim(), q);
    for b in 0..q {
        // Perturbs μ by at most `step` whatever the column's scale.
        let h = step / base.phi.col(b).iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let shifted = |delta: f64| -> Result<Vec<f64>> {
            let mut alpha = mem.params.alpha.clone();
            alpha[b] += delta;
            let data = calibrate_with_alpha(main, mem, layout, &alpha)?;
            coxph::score(&data.cox, beta)
        };
        let (up, down) = (shifted(h)?, shifted(-h)?);
        for a in 0..layout.dim() {
            numeric[(a, b)] = (up[a] - down[a]) / (2.0 * h);
        }
    }
    Ok(DerivativeCheck { relative_error: relative_error(&analytic, &numeric), analytic, numeric })
}

/// `max |a − b| / max |a|`.
pub fn relative_error(a: &Matrix, b: &Matrix) -> f64 {
    a.sub(b).max_abs() / a.max_abs().max(1e-300)
}

/// Labels for the hazard coefficients, exposure first.
pub fn term_names(fit: &CoxFit, confounders: &[String]) -> Vec<String> {
    fit.layout.term_names("x", confounders)
}
