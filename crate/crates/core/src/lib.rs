//! Regression calibration for Cox proportional hazards models whose exposure
//! is only observed through error-prone surrogates.
//!
//! The main study carries surrogates `Z` (one per buffer radius), confounders
//! `W` and right-censored survival outcomes. An external validation study
//! carries the true exposure `X` next to `Z` and `W`, usually as repeated
//! measurements per subject. The pipeline is:
//!
//! 1. reduce the surrogates ([`transforms`]: identity, PCA or restricted cubic
//!    splines over the radii) and fit a measurement error model
//!    `E[X | Z, W]` by OLS or GEE ([`mem`]);
//! 2. replace `X` by its calibrated mean in the Cox partial likelihood and
//!    maximize it ([`coxph`]);
//! 3. propagate the measurement-error-model uncertainty into the covariance of
//!    the hazard coefficients with a two-stage sandwich ([`inference`]).
//!
//! [`simulate`] reproduces the Monte Carlo study design and [`model_select`]
//! ranks candidate measurement error models by cross-validated error and QIC.
//!
//! The crate is `no_std` + `alloc` when the default `std` feature is turned
//! off; file formats, configuration and the command line live in the `rcal`
//! crate.

#![cfg_attr(not(feature = "std"), no_std)]
// Kernels index several parallel arrays by one sorted position.
#![allow(clippy::needless_range_loop)]

extern crate alloc;

mod math;

pub mod coxph;
pub mod data;
pub mod error;
pub mod inference;
pub mod linalg;
pub mod mem;
pub mod model_select;
pub mod rng;
pub mod simulate;
pub mod tol;
pub mod transforms;

pub use error::{Error, Result};
pub use linalg::Matrix;
