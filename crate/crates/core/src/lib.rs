//! Continuous-treatment policy learning from observational data.
//!
//! This crate estimates how well a treatment-assignment policy would perform
//! (its welfare) from logged observational data with a continuous treatment,
//! optimizes policies over monotone sieve families, and selects the smoothing
//! bandwidth and sieve complexity jointly with a penalized criterion that
//! accounts for estimation noise, policy-class complexity, and smoothing bias.
//!
//! Modules:
//! - [`data`]: dataset ingestion, validation, covariate rescaling.
//! - [`kernel`]: the flat-top smoothing kernel and its exact constants.
//! - [`sieve`]: monotone separable sieve policies and piecewise-linear policies.
//! - [`optimizer`]: projected-gradient empirical welfare maximization.
//! - [`nuisance`]: dose-response and propensity-density nuisance fits.
//! - [`welfare`]: kernel-smoothed IPW and double-debiased welfare estimators.
//! - [`biasbound`]: Fourier smoothness envelope and closed-form bias bounds.
//! - [`selection`]: penalized joint selection of (bandwidth, sieve dimension).
//! - [`sim`]: simulation harness with analytic data-generating processes.

pub mod biasbound;
pub mod data;
pub mod error;
pub mod kernel;
pub mod num;
pub mod nuisance;
pub mod optimizer;
pub mod rng;
pub mod selection;
pub mod sieve;
pub mod sim;
pub mod welfare;

pub use error::CoreError;
