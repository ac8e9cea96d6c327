//! Error taxonomy for the library.
//!
//! Each subsystem has a dedicated error enum so callers can match on the
//! failure mode; [`CoreError`] is the umbrella used at binary boundaries.

use thiserror::Error;

/// Failures while loading or preparing observational data.
#[derive(Debug, Error)]
pub enum DataError {
    /// The CSV header is missing a required column.
    #[error("missing column `{0}` in csv header")]
    MissingColumn(String),
    /// A cell did not parse to a finite number (1-based data row).
    #[error("non-finite value at data row {0}")]
    NonFiniteValue(usize),
    /// Fewer than two usable rows.
    #[error("too few rows: need at least 2, got {0}")]
    TooFewRows(usize),
    /// A covariate column is constant, so rescaling to [0,1] is undefined.
    #[error("covariate column x{col} is constant (value {value}); rescaling undefined")]
    ConstantCovariate { col: usize, value: f64 },
    /// Structural CSV failure (ragged row, bad header, unreadable file).
    #[error("csv failure: {0}")]
    Malformed(String),
    /// Underlying I/O failure.
    #[error("io failure: {0}")]
    Io(String),
}

/// Failures in kernel evaluation.
#[derive(Debug, Error)]
pub enum KernelError {
    /// Input was NaN or infinite.
    #[error("non-finite input to kernel evaluation: {0}")]
    NonFiniteInput(f64),
}

/// Failures in sieve policy construction or evaluation.
#[derive(Debug, Error)]
pub enum SieveError {
    /// Parameter vector length does not match (k+1)*d_X.
    #[error("dimension mismatch: family needs {expected} parameters, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    /// Piecewise-linear segments disagree at a threshold.
    #[error("continuity violation at threshold {at}: segments differ by {gap:e}")]
    ContinuityViolation { at: f64, gap: f64 },
    /// Thresholds are not strictly increasing.
    #[error("thresholds not strictly increasing at index {0}")]
    UnorderedThresholds(usize),
    /// A policy file could not be parsed or failed validation.
    #[error("bad policy file: {0}")]
    BadPolicyFile(String),
}

/// Failures in empirical-welfare maximization.
#[derive(Debug, Error)]
pub enum OptimizerError {
    /// No data points in the objective.
    #[error("empty objective: no data points")]
    EmptyObjective,
    /// Bandwidth must be strictly positive.
    #[error("non-positive bandwidth: {0}")]
    NonPositiveBandwidth(f64),
    /// Policy family and objective covariates disagree.
    #[error("dimension mismatch: family d_X {family}, objective d_X {objective}")]
    DimensionMismatch { family: usize, objective: usize },
}

/// Failures in welfare estimation and cross-fitting.
#[derive(Debug, Error)]
pub enum WelfareError {
    /// Bandwidth must be strictly positive.
    #[error("non-positive bandwidth: {0}")]
    NonPositiveBandwidth(f64),
    /// Fold count must be at least 2 and at most n.
    #[error("bad fold count: {folds} folds for {n} observations")]
    BadFoldCount { folds: usize, n: usize },
    /// A fold complement is too small to fit nuisances.
    #[error("fold {fold} complement has {size} observations; need at least {min}")]
    FoldTooSmall { fold: usize, size: usize, min: usize },
    /// dd_welfare was handed a fold plan without a fit for some fold.
    #[error("missing nuisance fit for fold {0}")]
    MissingFoldFit(usize),
}

/// Failures in smoothness-envelope and bias-bound computation.
#[derive(Debug, Error)]
pub enum BiasBoundError {
    /// Smoothness order r must be >= 1.
    #[error("bad smoothness order: r = {0}, need r >= 1")]
    BadSmoothnessOrder(i32),
    /// The estimated treatment density is not bounded away from zero.
    #[error("density not bounded away from zero (min density {0:e})")]
    DensityNotBoundedAway(f64),
    /// The Fourier curve has no grid points.
    #[error("empty curve: no frequency grid points")]
    EmptyCurve,
}

/// Failures in bandwidth/complexity selection.
#[derive(Debug, Error)]
pub enum SelectionError {
    /// Grid ratio parameter out of range.
    #[error("bad grid ratio rho = {0}")]
    BadRho(f64),
    /// No bandwidth survives the lower cutoff.
    #[error("empty bandwidth grid: h_min {h_min:.6} exceeds 1")]
    EmptyGrid { h_min: f64 },
    /// No (h, k) pair satisfies the admissibility constraint.
    #[error("no admissible (h, k) pair: VC bound exceeds n*h^2 everywhere")]
    NoAdmissiblePair,
    /// Holdout split leaves too few observations on a side.
    #[error("holdout split too small: {side} side has {size} observations; need at least {min}")]
    SplitTooSmall { side: &'static str, size: usize, min: usize },
    /// Propagated optimizer failure.
    #[error(transparent)]
    Optimizer(#[from] OptimizerError),
    /// Propagated welfare failure.
    #[error(transparent)]
    Welfare(#[from] WelfareError),
    /// Propagated bias-bound failure.
    #[error(transparent)]
    BiasBound(#[from] BiasBoundError),
}

/// Failures in the simulation harness.
#[derive(Debug, Error)]
pub enum SimError {
    /// Quadrature supports d_X <= 3; larger dimensions use Monte Carlo.
    #[error("dimension too large for tensor quadrature: d_X = {0}")]
    DimensionTooLarge(usize),
    /// Propagated selection failure.
    #[error(transparent)]
    Selection(#[from] SelectionError),
    /// Propagated optimizer failure.
    #[error(transparent)]
    Optimizer(#[from] OptimizerError),
    /// Propagated bias-bound failure.
    #[error(transparent)]
    BiasBound(#[from] BiasBoundError),
}

/// Umbrella error for binary boundaries.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Sieve(#[from] SieveError),
    #[error(transparent)]
    Optimizer(#[from] OptimizerError),
    #[error(transparent)]
    Welfare(#[from] WelfareError),
    #[error(transparent)]
    BiasBound(#[from] BiasBoundError),
    #[error(transparent)]
    Selection(#[from] SelectionError),
    #[error(transparent)]
    Sim(#[from] SimError),
}
