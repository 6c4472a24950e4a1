//! `rcal fit`: calibrated Cox model on user data.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use rcal_core::coxph::CoxLayout;
use rcal_core::data::MainStudy;
use rcal_core::inference::{self, CoxFit};
use rcal_core::mem::{self, MemFit};
use rcal_core::{tol, Matrix};
use serde::Serialize;

use super::Context as RunContext;
use crate::cli::FitArgs;
use crate::config::{self, FitFile, MethodChoice};
use crate::error::{CliError, Context, Result};
use crate::{io, model_file};

/// Exposure increment for reported hazard ratios.
pub const HR_INCREMENT: f64 = 0.1;

#[derive(Debug, Clone, Serialize)]
pub struct FitSettings {
    pub main: PathBuf,
    pub validation: Option<PathBuf>,
    pub mem: Option<PathBuf>,
    pub model: Option<String>,
    pub method: MethodChoice,
    pub interactions: Vec<String>,
    pub w0: BTreeMap<String, f64>,
    pub check_derivatives: bool,
}

impl FitSettings {
    pub fn resolve(args: &FitArgs, file: &FitFile) -> Result<Self> {
        let main = args.main.clone().or_else(|| file.main.clone()).ok_or_else(|| CliError::Usage("fit needs --main".into()))?;
        let (validation, mem) = if args.validation.is_some() || args.mem.is_some() {
            (args.validation.clone(), args.mem.clone())
        } else {
            (file.validation.clone(), file.mem.clone())
        };
        if validation.is_some() == mem.is_some() {
            return Err(CliError::Usage("fit needs exactly one of --validation and --mem".into()));
        }
        let model = args.model.clone().or_else(|| file.model.clone());
        if mem.is_some() && model.is_some() {
            return Err(CliError::Usage("--model applies only with --validation".into()));
        }
        let mut w0 = file.w0.clone().unwrap_or_default();
        for item in args.w0.iter().flatten() {
            let (name, value) = item.split_once('=').ok_or_else(|| CliError::Usage(format!("--w0 `{item}`: expected name=value")))?;
            let v: f64 = value.trim().parse().map_err(|_| CliError::Usage(format!("--w0 `{item}`: `{value}` is not a number")))?;
            w0.insert(name.trim().to_string(), v);
        }
        Ok(Self {
            main,
            validation,
            mem,
            model,
            method: args.method.or(file.method).unwrap_or(MethodChoice::Gee),
            interactions: args.interactions.clone().or_else(|| file.interactions.clone()).unwrap_or_default(),
            w0,
            check_derivatives: args.check_derivatives || file.check_derivatives.unwrap_or(false),
        })
    }
}

/// Hazard ratio for an exposure increment at fixed confounder values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HazardRatio {
    pub log_hr: f64,
    pub se: f64,
    pub hr: f64,
    pub lo: f64,
    pub hi: f64,
}

/// `exp(δ(β₁ + β₃ᵀw₀))` with a delta-method Wald interval; `w0` holds every
/// confounder's value.
pub fn hazard_ratio(fit: &CoxFit, w0: &[f64], increment: f64) -> HazardRatio {
    let layout = &fit.layout;
    let mut grad = vec![0.0; layout.dim()];
    grad[0] = increment;
    for (k, &c) in layout.interactions.iter().enumerate() {
        grad[1 + layout.p_w + k] = increment * w0[c];
    }
    let beta = fit.beta();
    let log_hr: f64 = grad.iter().zip(&beta).map(|(g, b)| g * b).sum();
    let var = quad_form(&fit.covariance, &grad);
    let se = var.max(0.0).sqrt();
    HazardRatio { log_hr, se, hr: log_hr.exp(), lo: (log_hr - tol::Z_975 * se).exp(), hi: (log_hr + tol::Z_975 * se).exp() }
}

fn quad_form(m: &Matrix, v: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..v.len() {
        for j in 0..v.len() {
            s += v[i] * m[(i, j)] * v[j];
        }
    }
    s
}

fn load_mem(settings: &FitSettings) -> Result<MemFit> {
    if let Some(p) = &settings.mem {
        return model_file::load(p);
    }
    let path = settings.validation.as_ref().expect("resolve checks one source");
    let validation = io::read_validation(path)?;
    let token = settings.model.as_deref().unwrap_or("standard");
    let spec = config::parse_spec(token, validation.schema())?;
    mem::fit(&validation, &spec, settings.method.into()).context("measurement-error model")
}

fn check_schemas(main: &MainStudy, mem: &MemFit, settings: &FitSettings) -> Result<()> {
    let (a, b) = (main.schema(), &mem.schema);
    let source = settings.mem.as_ref().or(settings.validation.as_ref()).expect("one source");
    if a.radii != b.radii {
        return Err(CliError::format(source, format!("surrogate radii {:?} differ from the main study's {:?}", b.radii, a.radii)));
    }
    if a.confounders != b.confounders {
        return Err(CliError::format(source, format!("confounders {:?} differ from the main study's {:?}", b.confounders, a.confounders)));
    }
    Ok(())
}

fn resolve_w0(main: &MainStudy, given: &BTreeMap<String, f64>) -> Result<Vec<f64>> {
    let names = &main.schema().confounders;
    if let Some(unknown) = given.keys().find(|k| !names.contains(k)) {
        return Err(CliError::Usage(format!("--w0: unknown confounder `{unknown}`")));
    }
    let n = main.len() as f64;
    Ok(names
        .iter()
        .enumerate()
        .map(|(c, name)| given.get(name).copied().unwrap_or_else(|| main.records().iter().map(|r| r.w[c]).sum::<f64>() / n))
        .collect())
}

fn report_text(
    settings: &FitSettings,
    main: &MainStudy,
    mem: &MemFit,
    fit: &CoxFit,
    w0: &[f64],
    hr: &HazardRatio,
    check: Option<f64>,
) -> String {
    let schema = main.schema();
    let mut s = String::new();
    let _ = writeln!(s, "Calibrated Cox proportional hazards fit");
    let _ = writeln!(s);
    let _ = writeln!(s, "Main study:        {} ({} subjects, {} events)", settings.main.display(), main.len(), main.n_events());
    let _ = writeln!(
        s,
        "Calibration model: {} ({:?}, {} subjects, {} rows)",
        config::spec_token(&mem.design.spec, &mem.schema),
        mem.method,
        mem.n_subjects,
        mem.n_obs
    );
    let _ = writeln!(s, "  psi = {:.4}, sigma2 = {:.6}", mem.psi, mem.sigma2);
    let _ = writeln!(
        s,
        "Newton-Raphson:    {} iterations, |score| = {:.2e}, loglik = {:.6}",
        fit.report.iterations, fit.report.score_norm, fit.report.loglik
    );
    let _ = writeln!(s);
    let _ = writeln!(s, "{:<16} {:>12} {:>12} {:>12} {:>12}", "term", "estimate", "se", "ci_lo", "ci_hi");
    let beta = fit.beta();
    for (i, name) in inference::term_names(fit, &schema.confounders).iter().enumerate() {
        let _ = writeln!(s, "{:<16} {:>12.6} {:>12.6} {:>12.6} {:>12.6}", name, beta[i], fit.se[i], fit.ci_lower[i], fit.ci_upper[i]);
    }
    let _ = writeln!(s);
    let at: Vec<String> = schema.confounders.iter().zip(w0).map(|(n, v)| format!("{n} = {v}")).collect();
    let _ = writeln!(s, "Hazard ratio per {HR_INCREMENT} increase in exposure at {}:", at.join(", "));
    let _ = writeln!(s, "  HR = {:.4} (95% CI {:.4} to {:.4})", hr.hr, hr.lo, hr.hi);
    if let Some(err) = check {
        let _ = writeln!(s);
        let _ = writeln!(s, "Calibration derivative check: relative error {err:.3e} (threshold {:.0e})", tol::DERIVATIVE_CHECK);
    }
    s
}

pub fn run(ctx: &RunContext, args: &FitArgs, file: &FitFile) -> Result<()> {
    let settings = FitSettings::resolve(args, file)?;
    let main = io::read_main(&settings.main)?;
    let mem = load_mem(&settings)?;
    check_schemas(&main, &mem, &settings)?;
    let schema = main.schema().clone();
    let mut inter = Vec::new();
    for name in &settings.interactions {
        let c = schema
            .confounders
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| CliError::Usage(format!("--interaction: unknown confounder `{name}`")))?;
        if !inter.contains(&c) {
            inter.push(c);
        }
    }
    let w0 = resolve_w0(&main, &settings.w0)?;
    let layout = CoxLayout::new(schema.p_w(), inter).context("hazard layout")?;
    let fit = inference::fit_calibrated(&main, &mem, &layout).context("calibrated Cox fit")?;
    let check = if settings.check_derivatives {
        let c = inference::check_u_alpha(&main, &mem, &layout, &fit.beta(), tol::DERIVATIVE_STEP).context("derivative check")?;
        Some(c.relative_error)
    } else {
        None
    };

    ctx.out_dir()?;
    let names = inference::term_names(&fit, &schema.confounders);
    let beta = fit.beta();
    let rows: Vec<Vec<String>> = names
        .iter()
        .enumerate()
        .map(|(i, n)| {
            let mut row = vec![n.clone()];
            row.extend([beta[i], fit.se[i], fit.ci_lower[i], fit.ci_upper[i]].map(|v| v.to_string()));
            row
        })
        .collect();
    io::write_table(&ctx.path("fit.csv"), &["term", "estimate", "se", "ci_lo", "ci_hi"], &rows)?;
    let hr = hazard_ratio(&fit, &w0, HR_INCREMENT);
    let text = report_text(&settings, &main, &mem, &fit, &w0, &hr, check);
    io::write_text(&ctx.path("report.txt"), &text)?;
    print!("{text}");
    ctx.write_provenance("fit", &settings)?;
    match check {
        Some(err) if err.is_nan() || err > tol::DERIVATIVE_CHECK => Err(CliError::Check(format!(
            "calibration derivative check failed: relative error {err:.3e} exceeds {:.0e}",
            tol::DERIVATIVE_CHECK
        ))),
        _ => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rcal_core::coxph::{CoxParams, CoxReport};
    use rcal_core::inference::SandwichComponents;

    fn fake_fit(beta: [f64; 3], cov: Matrix) -> CoxFit {
        let layout = CoxLayout::new(1, vec![0]).unwrap();
        let z = Matrix::zeros(3, 3);
        CoxFit {
            params: CoxParams::from_vec(&layout, &beta).unwrap(),
            layout,
            se: (0..3).map(|i| cov[(i, i)].sqrt()).collect(),
            covariance: cov,
            ci_lower: vec![0.0; 3],
            ci_upper: vec![0.0; 3],
            components: SandwichComponents { i_beta: z.clone(), g_beta: z.clone(), u_alpha: z.clone(), v_alpha: z, n: 1, n_v: 1 },
            report: CoxReport { iterations: 0, score_norm: 0.0, loglik: 0.0, step_halvings: 0 },
        }
    }

    fn cov() -> Matrix {
        Matrix::new(3, 3, vec![0.8, 0.1, -0.2, 0.1, 0.5, 0.05, -0.2, 0.05, 0.3]).unwrap()
    }

    #[test]
    fn hazard_ratio_arithmetic() {
        let hr = hazard_ratio(&fake_fit([-0.284, -0.049, 0.0], cov()), &[0.604], 0.1);
        assert!((hr.hr - (-0.0284f64).exp()).abs() < 1e-15);
        assert!((hr.hr - 0.9720).abs() < 5e-5);
    }

    #[test]
    fn zero_modifier_uses_beta1_only() {
        let f = fake_fit([0.7, 0.3, -5.0], cov());
        let hr = hazard_ratio(&f, &[0.0], 0.1);
        assert!((hr.log_hr - 0.07).abs() < 1e-15);
        assert!((hr.se - 0.1 * 0.8f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn delta_method_matches_finite_difference_propagation() {
        let f = fake_fit([0.7, 0.3, -0.4], cov());
        let w0 = [2.5];
        let hr = hazard_ratio(&f, &w0, 0.1);
        let g = |b: &[f64]| 0.1 * (b[0] + b[2] * w0[0]);
        let beta = f.beta();
        let h = 1e-6;
        let grad: Vec<f64> = (0..3)
            .map(|i| {
                let (mut up, mut dn) = (beta.clone(), beta.clone());
                up[i] += h;
                dn[i] -= h;
                (g(&up) - g(&dn)) / (2.0 * h)
            })
            .collect();
        let se_fd = quad_form(&f.covariance, &grad).sqrt();
        assert!((hr.se - se_fd).abs() < 1e-6);
        assert!((hr.lo - (hr.log_hr - tol::Z_975 * hr.se).exp()).abs() < 1e-15);
    }
}
