//! Numerical contract values shared across modules.

/// Largest asymmetry `|a_ij - a_ji|` accepted (and then symmetrized away).
pub const SYMMETRY: f64 = 1e-12;
/// Cholesky pivot floor, relative to the largest diagonal entry.
pub const PIVOT_RELATIVE: f64 = 1e-14;
/// Off-diagonal mass at which the Jacobi sweep stops, relative to the Frobenius norm.
pub const JACOBI_OFF_DIAGONAL: f64 = 1e-15;
/// Cap on Jacobi sweeps.
pub const JACOBI_MAX_SWEEPS: usize = 100;
/// A design column whose residual variance after projecting on the preceding
/// columns falls below this fraction of its own variance is collinear.
pub const COLLINEARITY: f64 = 1e-12;

/// GEE stops when the largest coefficient change falls below this.
pub const GEE_STEP: f64 = 1e-10;
pub const GEE_MAX_ITER: usize = 50;
/// Upper clamp of the exchangeable correlation.
pub const PSI_MAX: f64 = 0.99;

/// Newton-Raphson on the partial likelihood: score sup-norm.
pub const COX_SCORE: f64 = 1e-8;
/// Newton-Raphson on the partial likelihood: log-likelihood change.
pub const COX_LOGLIK: f64 = 1e-10;
pub const COX_MAX_ITER: usize = 100;
/// Any coefficient beyond this magnitude is treated as divergence (monotone likelihood).
pub const COX_DIVERGENCE: f64 = 50.0;
pub const COX_MAX_HALVINGS: usize = 40;

/// Two-sided 97.5% standard normal quantile.
pub const Z_975: f64 = 1.959964;

/// Pilot cohort used to calibrate the censoring bound.
pub const CMAX_PILOT: usize = 50_000;
/// Accepted distance between the achieved and the requested event rate.
pub const CMAX_RATE: f64 = 0.002;
pub const CMAX_MAX_ITER: usize = 60;

/// A simulation cell with more failed replicates than this fraction is flagged.
pub const FAILED_REPLICATE_FRACTION: f64 = 0.05;

/// Central-difference step for the calibration-derivative check.
pub const DERIVATIVE_STEP: f64 = 1e-5;
/// Largest accepted relative disagreement in the calibration-derivative check.
pub const DERIVATIVE_CHECK: f64 = 1e-5;
