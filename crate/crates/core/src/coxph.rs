//! Cox partial likelihood with calibrated covariates
//! `u_i = [μ_i, W_iᵀ, (μ_i · W_ic)ᵀ]` and its Newton-Raphson maximizer.
//!
//! The log partial likelihood is `Σ_i D_i {βᵀu_i − log S⁽⁰⁾(β, T_i)}` with the
//! constant `log(1/N)` dropped. Ties use the Breslow convention: every subject
//! with `T_j ≥ T_i` is at risk at `T_i`, including those censored at `T_i`.
//! Risk-set sums come from one sweep over rows sorted by decreasing time;
//! linear predictors are shifted by their maximum before exponentiation.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::math;
use crate::tol;

/// Hazard coefficients `(β₁, β₂, β₃)`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CoxParams {
    pub beta1: f64,
    pub beta2: Vec<f64>,
    pub beta3: Vec<f64>,
}

impl CoxParams {
    pub fn zeros(layout: &CoxLayout) -> Self {
        Self { beta1: 0.0, beta2: vec![0.0; layout.p_w], beta3: vec![0.0; layout.interactions.len()] }
    }

    pub fn from_vec(layout: &CoxLayout, v: &[f64]) -> Result<Self> {
        if v.len() != layout.dim() {
            return Err(Error::DimensionMismatch { context: "CoxParams", expected: layout.dim(), found: v.len() });
        }
        let (b2, b3) = v[1..].split_at(layout.p_w);
        Ok(Self { beta1: v[0], beta2: b2.to_vec(), beta3: b3.to_vec() })
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(1 + self.beta2.len() + self.beta3.len());
        v.push(self.beta1);
        v.extend_from_slice(&self.beta2);
        v.extend_from_slice(&self.beta3);
        v
    }
}

/// Which confounders enter the hazard and which of them interact with the exposure.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CoxLayout {
    pub p_w: usize,
    pub interactions: Vec<usize>,
}

impl CoxLayout {
    pub fn new(p_w: usize, interactions: Vec<usize>) -> Result<Self> {
        if let Some(&c) = interactions.iter().find(|&&c| c >= p_w) {
            return Err(Error::InvalidArgument(format!("interaction confounder {c} out of range (p_w = {p_w})")));
        }
        Ok(Self { p_w, interactions })
    }

    /// Layout for a bare covariate matrix: the first column plays the exposure.
    pub fn plain(dim: usize) -> Self {
        Self { p_w: dim.saturating_sub(1), interactions: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        1 + self.p_w + self.interactions.len()
    }

    /// `u = [μ, wᵀ, (μ · w_c)ᵀ]`.
    pub fn row(&self, mu: f64, w: &[f64]) -> Result<Vec<f64>> {
        if w.len() != self.p_w {
            return Err(Error::DimensionMismatch { context: "confounder vector", expected: self.p_w, found: w.len() });
        }
        let mut u = Vec::with_capacity(self.dim());
        u.push(mu);
        u.extend_from_slice(w);
        u.extend(self.interactions.iter().map(|&c| mu * w[c]));
        Ok(u)
    }

    /// `∂u/∂μ = [1, 0ᵀ, (w_c)ᵀ]`, read off an assembled row.
    pub fn d_row_d_mu(&self, u: &[f64]) -> Vec<f64> {
        let mut c = vec![0.0; self.dim()];
        c[0] = 1.0;
        for (k, &j) in self.interactions.iter().enumerate() {
            c[1 + self.p_w + k] = u[1 + j];
        }
        c
    }

    pub fn term_names(&self, exposure: &str, confounders: &[String]) -> Vec<String> {
        let name = |c: usize| confounders.get(c).cloned().unwrap_or_else(|| format!("w{}", c + 1));
        let mut names = vec![String::from(exposure)];
        names.extend((0..self.p_w).map(name));
        names.extend(self.interactions.iter().map(|&c| format!("{exposure}:{}", name(c))));
        names
    }
}

/// One main-study subject as seen by the outcome model.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateRow {
    pub u: Vec<f64>,
    pub time: f64,
    pub event: bool,
}

/// Risk-set sums `S⁽⁰⁾, S⁽¹⁾, S⁽²⁾` at one event time.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskSetSums {
    pub s0: f64,
    pub s1: Vec<f64>,
    pub s2: Matrix,
}

/// Rows sorted once by decreasing follow-up time.
#[derive(Debug, Clone)]
pub struct CoxData {
    pub(crate) layout: CoxLayout,
    /// Covariates in sorted order.
    pub(crate) u: Matrix,
    pub(crate) time: Vec<f64>,
    pub(crate) event: Vec<bool>,
    /// `order[pos]` is the caller's index of sorted row `pos`.
    pub(crate) order: Vec<usize>,
    /// Tie groups as `[start, end)` ranges over sorted positions.
    pub(crate) groups: Vec<(usize, usize)>,
}

impl CoxData {
    pub fn new(layout: CoxLayout, rows: &[CovariateRow]) -> Result<Self> {
        let d = layout.dim();
        let mut u = Matrix::zeros(rows.len(), d);
        for (i, r) in rows.iter().enumerate() {
            if r.u.len() != d {
                return Err(Error::DimensionMismatch { context: "covariate row", expected: d, found: r.u.len() });
            }
            u.row_mut(i).copy_from_slice(&r.u);
        }
        let times: Vec<f64> = rows.iter().map(|r| r.time).collect();
        let events: Vec<bool> = rows.iter().map(|r| r.event).collect();
        Self::from_parts(layout, &u, &times, &events)
    }

    /// `u` holds one row per subject in the caller's order.
    pub fn from_parts(layout: CoxLayout, u: &Matrix, times: &[f64], events: &[bool]) -> Result<Self> {
        let n = u.rows();
        if u.cols() != layout.dim() {
            return Err(Error::DimensionMismatch { context: "covariate matrix", expected: layout.dim(), found: u.cols() });
        }
        if times.len() != n || events.len() != n {
            return Err(Error::DimensionMismatch { context: "survival outcomes", expected: n, found: times.len().min(events.len()) });
        }
        if times.iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFinite("follow-up times"));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| times[b].total_cmp(&times[a]).then(a.cmp(&b)));
        let sorted_u = Matrix::from_fn(n, u.cols(), |p, k| u[(order[p], k)]);
        let time: Vec<f64> = order.iter().map(|&i| times[i]).collect();
        let event: Vec<bool> = order.iter().map(|&i| events[i]).collect();
        let mut groups = Vec::new();
        let mut start = 0;
        while start < n {
            let mut end = start + 1;
            while end < n && time[end] == time[start] {
                end += 1;
            }
            groups.push((start, end));
            start = end;
        }
        Ok(Self { layout, u: sorted_u, time, event, order, groups })
    }

    pub fn layout(&self) -> &CoxLayout {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    pub fn n_events(&self) -> usize {
        self.event.iter().filter(|&&e| e).count()
    }

    /// Linear predictors in sorted order, and their maximum.
    pub(crate) fn linear_predictors(&self, beta: &[f64]) -> (Vec<f64>, f64) {
        let eta: Vec<f64> = (0..self.len()).map(|p| linalg::dot(self.u.row(p), beta)).collect();
        let max = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (eta, if max.is_finite() { max } else { 0.0 })
    }

    fn check_beta(&self, beta: &[f64]) -> Result<()> {
        if beta.len() != self.dim() {
            return Err(Error::DimensionMismatch { context: "beta", expected: self.dim(), found: beta.len() });
        }
        if self.n_events() == 0 {
            return Err(Error::NoEvents);
        }
        Ok(())
    }
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd)]
enum Order {
    Value,
    Gradient,
    Hessian,
}

struct Evaluation {
    loglik: f64,
    score: Vec<f64>,
    information: Matrix,
}

fn evaluate(data: &CoxData, beta: &[f64], order: Order) -> Result<Evaluation> {
    data.check_beta(beta)?;
    let d = data.dim();
    let (eta, shift) = data.linear_predictors(beta);
    let mut s0 = 0.0;
    let mut s1 = vec![0.0; d];
    let mut s2 = Matrix::zeros(d, d);
    let mut out = Evaluation { loglik: 0.0, score: vec![0.0; d], information: Matrix::zeros(d, d) };
    let mut event_u = vec![0.0; d];
    for &(start, end) in &data.groups {
        let mut m = 0usize;
        let mut event_eta = 0.0;
        event_u.iter_mut().for_each(|v| *v = 0.0);
        for p in start..end {
            let r = math::exp(eta[p] - shift);
            let u = data.u.row(p);
            s0 += r;
            if order >= Order::Gradient {
                linalg::axpy(r, u, &mut s1);
            }
            if order == Order::Hessian {
                s2.add_outer(r, u, u);
            }
            if data.event[p] {
                m += 1;
                event_eta += eta[p];
                linalg::axpy(1.0, u, &mut event_u);
            }
        }
        if m == 0 {
            continue;
        }
        let mf = m as f64;
        out.loglik += event_eta - mf * (math::ln(s0) + shift);
        if order >= Order::Gradient {
            for k in 0..d {
                out.score[k] += event_u[k] - mf * s1[k] / s0;
            }
        }
        if order == Order::Hessian {
            for a in 0..d {
                for b in 0..d {
                    out.information[(a, b)] += mf * (s2[(a, b)] / s0 - s1[a] * s1[b] / (s0 * s0));
                }
            }
        }
    }
    if !out.loglik.is_finite() {
        return Err(Error::NonFinite("log partial likelihood"));
    }
    out.information = out.information.symmetrized();
    Ok(out)
}

pub fn log_partial_likelihood(data: &CoxData, beta: &[f64]) -> Result<f64> {
    Ok(evaluate(data, beta, Order::Value)?.loglik)
}

pub fn score(data: &CoxData, beta: &[f64]) -> Result<Vec<f64>> {
    Ok(evaluate(data, beta, Order::Gradient)?.score)
}

/// Observed information `−∂U/∂β`.
pub fn information(data: &CoxData, beta: &[f64]) -> Result<Matrix> {
    Ok(evaluate(data, beta, Order::Hessian)?.information)
}

/// Risk-set sums at each event, keyed by the caller's index of the event row.
pub fn risk_set_sums(data: &CoxData, beta: &[f64]) -> Result<Vec<(usize, RiskSetSums)>> {
    data.check_beta(beta)?;
    let d = data.dim();
    let (eta, _) = data.linear_predictors(beta);
    let mut acc = RiskSetSums { s0: 0.0, s1: vec![0.0; d], s2: Matrix::zeros(d, d) };
    let mut out = Vec::with_capacity(data.n_events());
    for &(start, end) in &data.groups {
        for p in start..end {
            let r = math::exp(eta[p]);
            let u = data.u.row(p);
            acc.s0 += r;
            linalg::axpy(r, u, &mut acc.s1);
            acc.s2.add_outer(r, u, u);
        }
        out.extend((start..end).filter(|&p| data.event[p]).map(|p| (data.order[p], acc.clone())));
    }
    out.sort_by_key(|(i, _)| *i);
    Ok(out)
}

/// Convergence diagnostics of [`fit`].
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CoxReport {
    pub iterations: usize,
    /// `‖U(β̂)‖∞`.
    pub score_norm: f64,
    pub loglik: f64,
    pub step_halvings: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoxEstimate {
    pub params: CoxParams,
    pub beta: Vec<f64>,
    pub information: Matrix,
    pub report: CoxReport,
}

/// Newton-Raphson with step halving, started at `init` (zero when `None`).
pub fn fit(data: &CoxData, init: Option<&CoxParams>) -> Result<CoxEstimate> {
    let mut beta = match init {
        Some(p) => p.to_vec(),
        None => vec![0.0; data.dim()],
    };
    let mut current = evaluate(data, &beta, Order::Hessian)?;
    let mut halvings_total = 0;
    let mut last_change = f64::INFINITY;
    let norm = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let done = |beta: Vec<f64>, ev: Evaluation, iterations: usize, halvings: usize| -> Result<CoxEstimate> {
        Ok(CoxEstimate {
            params: CoxParams::from_vec(&data.layout, &beta)?,
            report: CoxReport { iterations, score_norm: norm(&ev.score), loglik: ev.loglik, step_halvings: halvings },
            beta,
            information: ev.information,
        })
    };
    if norm(&current.score) < tol::COX_SCORE {
        return done(beta, current, 0, 0);
    }
    for iteration in 1..=tol::COX_MAX_ITER {
        let step = linalg::solve_spd_vec(&current.information, &current.score)?;
        let slack = 1e-12 * (1.0 + current.loglik.abs());
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=tol::COX_MAX_HALVINGS {
            let candidate: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b + t * s).collect();
            if let Ok(ev) = evaluate(data, &candidate, Order::Value) {
                if ev.loglik >= current.loglik - slack {
                    accepted = Some(candidate);
                    break;
                }
            }
            t *= 0.5;
            halvings_total += 1;
        }
        let Some(candidate) = accepted else {
            return Err(Error::NoConvergence { what: "Cox Newton-Raphson (step halving)", iterations: iteration, last_change });
        };
        if candidate.iter().any(|b| b.abs() > tol::COX_DIVERGENCE) {
            return Err(Error::Divergence { limit: tol::COX_DIVERGENCE });
        }
        let next = evaluate(data, &candidate, Order::Hessian)?;
        last_change = (next.loglik - current.loglik).abs();
        beta = candidate;
        current = next;
        if norm(&current.score) < tol::COX_SCORE && last_change < tol::COX_LOGLIK {
            return done(beta, current, iteration, halvings_total);
        }
    }
    Err(Error::NoConvergence { what: "Cox Newton-Raphson", iterations: tol::COX_MAX_ITER, last_change })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn plain(x: &[Vec<f64>], t: &[f64], d: &[bool]) -> CoxData {
        let dim = x[0].len();
        CoxData::from_parts(CoxLayout::plain(dim), &Matrix::from_rows(x), t, d).unwrap()
    }

    fn random(n: usize, dim: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<f64>, Vec<bool>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = (0..n).map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        // coarse times create ties
        let t = (0..n).map(|_| (rng.random_range(0.0..10.0f64)).round()).collect();
        let d = (0..n).map(|_| rng.random_bool(0.7)).collect();
        (x, t, d)
    }

    /// Direct double loop over subjects.
    fn quadratic_loglik(x: &[Vec<f64>], t: &[f64], d: &[bool], beta: &[f64]) -> f64 {
        let eta = |j: usize| x[j].iter().zip(beta).map(|(a, b)| a * b).sum::<f64>();
        let mut ll = 0.0;
        for i in 0..x.len() {
            if d[i] {
                let s0: f64 = (0..x.len()).filter(|&j| t[j] >= t[i]).map(|j| eta(j).exp()).sum();
                ll += eta(i) - s0.ln();
            }
        }
        ll
    }

    #[test]
    fn null_loglik_closed_form() {
        let data = plain(&[vec![0.3], vec![1.0], vec![-2.0]], &[1.0, 2.0, 3.0], &[true, true, false]);
        let ll = log_partial_likelihood(&data, &[0.0]).unwrap();
        assert!((ll + 3f64.ln() + 2f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn two_subject_closed_forms() {
        let (x1, x2, b) = (0.7, -0.4, 1.3);
        let data = plain(&[vec![x1], vec![x2]], &[1.0, 2.0], &[true, false]);
        let p = (b * x1).exp() / ((b * x1).exp() + (b * x2).exp());
        assert!((log_partial_likelihood(&data, &[b]).unwrap() - p.ln()).abs() < 1e-14);
        let info = information(&data, &[b]).unwrap();
        assert!((info[(0, 0)] - p * (1.0 - p) * (x1 - x2) * (x1 - x2)).abs() < 1e-14);
    }

    #[test]
    fn matches_quadratic_oracle_with_ties() {
        for seed in 0..10 {
            let (x, t, d) = random(50, 3, seed);
            let data = plain(&x, &t, &d);
            let beta = [0.5, -1.0, 2.0];
            let ll = log_partial_likelihood(&data, &beta).unwrap();
            assert!((ll - quadratic_loglik(&x, &t, &d, &beta)).abs() < 1e-10);
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let (x, t, d) = random(40, 3, 11);
        let data = plain(&x, &t, &d);
        let beta = [0.3, -0.2, 0.8];
        let u = score(&data, &beta).unwrap();
        let info = information(&data, &beta).unwrap();
        let h = 1e-5;
        for k in 0..3 {
            let mut bp = beta;
            let mut bm = beta;
            bp[k] += h;
            bm[k] -= h;
            let fd = (log_partial_likelihood(&data, &bp).unwrap() - log_partial_likelihood(&data, &bm).unwrap()) / (2.0 * h);
            assert!((fd - u[k]).abs() < 1e-6 * (1.0 + u[k].abs()));
            let (sp, sm) = (score(&data, &bp).unwrap(), score(&data, &bm).unwrap());
            for j in 0..3 {
                let fd = -(sp[j] - sm[j]) / (2.0 * h);
                assert!((fd - info[(j, k)]).abs() < 1e-5 * (1.0 + info[(j, k)].abs()));
            }
        }
    }

    #[test]
    fn fit_reaches_stationary_point() {
        let (x, t, d) = random(200, 2, 3);
        let data = plain(&x, &t, &d);
        let est = fit(&data, None).unwrap();
        assert!(est.report.score_norm < tol::COX_SCORE);
        assert!(score(&data, &est.beta).unwrap().iter().all(|s| s.abs() < 1e-8));
    }

    #[test]
    fn perfect_separation_diverges() {
        // small covariate spacing keeps the score above tolerance well past the limit
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![-0.1 * i as f64]).collect();
        let t: Vec<f64> = (0..10).map(|i| i as f64 + 1.0).collect();
        let data = plain(&x, &t, &[true; 10]);
        assert!(matches!(fit(&data, None), Err(Error::Divergence { .. })));
    }

    #[test]
    fn no_events_rejected() {
        let data = plain(&[vec![1.0], vec![2.0]], &[1.0, 2.0], &[false, false]);
        assert_eq!(log_partial_likelihood(&data, &[0.0]), Err(Error::NoEvents));
    }

    #[test]
    fn risk_set_sums_match_direct() {
        let (x, t, d) = random(15, 2, 5);
        let data = plain(&x, &t, &d);
        let beta = [0.4, -0.6];
        for (i, s) in risk_set_sums(&data, &beta).unwrap() {
            assert!(d[i]);
            let direct: f64 = (0..15).filter(|&j| t[j] >= t[i]).map(|j| (x[j][0] * beta[0] + x[j][1] * beta[1]).exp()).sum();
            assert!((s.s0 - direct).abs() < 1e-12 * direct);
        }
    }

    #[test]
    fn layout_rows_and_names() {
        let layout = CoxLayout::new(2, vec![1]).unwrap();
        let u = layout.row(2.0, &[3.0, 5.0]).unwrap();
        assert_eq!(u, vec![2.0, 3.0, 5.0, 10.0]);
        assert_eq!(layout.d_row_d_mu(&u), vec![1.0, 0.0, 0.0, 5.0]);
        let names = layout.term_names("x", &["a".into(), "b".into()]);
        assert_eq!(names, vec!["x", "a", "b", "x:b"]);
        assert!(CoxLayout::new(1, vec![1]).is_err());
    }
}
