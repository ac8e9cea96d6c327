//! Subcommand implementations: each builds a typed report with frozen key
//! order, serializes it once, and writes it atomically (temp file in the
//! target directory, then rename).

use crate::args::{
    BiasboundArgs, DgpArg, EstimatorArg, EvaluateArgs, FitArgs, SimulateArgs,
};
use ctp_core::biasbound::{bias_bound, fit_envelope, BiasBoundFit, MuFtCurve};
use ctp_core::data::{load_csv, rescale_covariates, Dataset};
use ctp_core::error::{
    BiasBoundError, DataError, OptimizerError, SelectionError, SieveError, SimError, WelfareError,
};
use ctp_core::num::{mean, median, pairwise_sum};
use ctp_core::rng::mix;
use ctp_core::selection::{
    make_grid, select, EstimatorSpec, PenalizedScore, PenaltyKind, SelectionConfig,
};
use ctp_core::sieve::{eval_policy, MonotoneSeparableFamily, PolicyFile, PolicyParams};
use ctp_core::sim::{
    run_regret_experiment, write_regret_csv, DgpSpec, RegretConfig, RegretRecord, SimEstimator,
};
use ctp_core::welfare::EstimatorKind;
use serde::Serialize;
use std::path::{Path, PathBuf};

/// Largest smoothness order tried by the envelope fit.
const R_MAX: u32 = 4;
/// Seed salt separating the bias-curve cross-fit from selection draws.
const BIAS_CURVE_SALT: u64 = 0x6269_6173;

/// Library version embedded in every report.
fn version() -> &'static str {
    env!("CARGO_PKG_VERSION")
}

/// CLI failure categories; the numeric codes are part of the interface.
#[derive(Debug)]
pub enum CliError {
    /// Invalid configuration or malformed input (exit 2).
    Config(String),
    /// Filesystem failure (exit 3).
    Io(String),
    /// Estimation or optimization failure (exit 4).
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }

    /// Single-line `error: <category>: <detail>` for the diagnostic stream.
    pub fn render(&self) -> String {
        let (tag, msg) = match self {
            CliError::Config(m) => ("config", m),
            CliError::Io(m) => ("io", m),
            CliError::Numerical(m) => ("numerical", m),
        };
        format!("error: {tag}: {}", single_line(msg))
    }
}

pub fn single_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Io(m) => CliError::Io(m),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<SieveError> for CliError {
    fn from(e: SieveError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<SelectionError> for CliError {
    fn from(e: SelectionError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<BiasBoundError> for CliError {
    fn from(e: BiasBoundError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<OptimizerError> for CliError {
    fn from(e: OptimizerError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<WelfareError> for CliError {
    fn from(e: WelfareError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

/// Serialize a report and write it atomically: the bytes land in a
/// temporary file in the destination directory, then rename into place.
fn write_report<T: Serialize>(path: &Path, report: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(report)
        .map_err(|e| CliError::Io(format!("serializing report: {e}")))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let name = path
        .file_name()
        .ok_or_else(|| CliError::Config(format!("output path `{}` has no file name", path.display())))?;
    let tmp = dir.join(format!(".{}.{}.tmp", name.to_string_lossy(), std::process::id()));
    std::fs::write(&tmp, bytes)
        .map_err(|e| CliError::Io(format!("writing `{}`: {e}", tmp.display())))?;
    std::fs::rename(&tmp, path).map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        CliError::Io(format!("renaming into `{}`: {e}", path.display()))
    })
}

fn positive(name: &str, v: f64) -> Result<(), CliError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(CliError::Config(format!("--{name} must be positive and finite, got {v}")))
    }
}

fn check_common_knobs(
    dx: usize,
    kmax: usize,
    folds: usize,
    draws: usize,
    iota: f64,
    rho: f64,
    gamma: f64,
) -> Result<(), CliError> {
    if dx == 0 {
        return Err(CliError::Config("--dx must be at least 1".into()));
    }
    if kmax == 0 {
        return Err(CliError::Config("--kmax must be at least 1".into()));
    }
    if folds < 2 {
        return Err(CliError::Config("--folds must be at least 2".into()));
    }
    if draws == 0 {
        return Err(CliError::Config("--draws must be at least 1".into()));
    }
    if !(iota > 0.0 && iota < 1.0) {
        return Err(CliError::Config(format!("--iota must be in (0, 1), got {iota}")));
    }
    positive("rho", rho)?;
    if !(gamma.is_finite() && gamma >= 0.0) {
        return Err(CliError::Config(format!("--gamma must be nonnegative, got {gamma}")));
    }
    Ok(())
}

fn load_and_rescale(data: &Path, dx: usize) -> Result<Dataset, CliError> {
    let ds = load_csv(data, dx)?;
    Ok(rescale_covariates(ds)?)
}

fn envelope_fit(ds: &Dataset, seed: u64, gamma: f64) -> Result<BiasBoundFit, CliError> {
    let curve = MuFtCurve::estimate(ds, mix(seed, &[BIAS_CURVE_SALT]))?;
    let mut fit = fit_envelope(&curve, ds.n(), R_MAX)?;
    fit.gamma = gamma;
    Ok(fit)
}

// ---------------------------------------------------------------- fit --

#[derive(Serialize)]
struct FitConfig {
    command: &'static str,
    data: String,
    dx: usize,
    seed: u64,
    penalty: crate::args::PenaltyArg,
    estimator: EstimatorArg,
    grid: crate::args::GridArg,
    rho: f64,
    kmax: usize,
    folds: usize,
    draws: usize,
    gamma: f64,
    iota: f64,
    out: String,
}

#[derive(Serialize)]
struct Chosen {
    h_hat: f64,
    k_hat: usize,
    welfare: f64,
    rad_penalty: f64,
    tau: f64,
    bias_penalty: f64,
    q: f64,
    estimator: EstimatorKind,
    penalty: PenaltyKind,
}

#[derive(Serialize)]
struct FitDiagnostics {
    version: String,
    n: usize,
    d_x: usize,
    r_hat: u32,
    v_hat: f64,
    gamma: f64,
    bias_degenerate: bool,
    grid: Vec<f64>,
}

#[derive(Serialize)]
struct FitReport {
    config: FitConfig,
    selection_table: Vec<PenalizedScore>,
    chosen: Chosen,
    policy: PolicyFile,
    diagnostics: FitDiagnostics,
}

fn selection_config(seed: u64, kmax: usize, folds: usize, draws: usize, iota: f64) -> SelectionConfig {
    SelectionConfig {
        seed,
        n_draws: draws,
        folds,
        iota,
        k_values: (1..=kmax).collect(),
        ..SelectionConfig::default()
    }
}

pub fn run_fit(args: &FitArgs) -> Result<(), CliError> {
    check_common_knobs(args.dx, args.kmax, args.folds, args.draws, args.iota, args.rho, args.gamma)?;
    let ds = load_and_rescale(&args.data, args.dx)?;
    let fit = envelope_fit(&ds, args.seed, args.gamma)?;
    let grid = make_grid(args.grid.into(), args.rho, ds.n(), fit.r_hat)?;
    let cfg = selection_config(args.seed, args.kmax, args.folds, args.draws, args.iota);
    let estimator = match args.estimator {
        EstimatorArg::Ipw => EstimatorSpec::IpwPlugin,
        EstimatorArg::Dd => EstimatorSpec::DoubleDebiased,
    };
    let res = select(&ds, &grid, args.penalty.into(), &estimator, &fit, &cfg)?;
    let row = *res
        .table
        .iter()
        .find(|r| r.h == res.h_hat && r.k == res.k_hat)
        .expect("winning cell is present in the score table");
    let fam = MonotoneSeparableFamily::new(ds.d_x, res.k_hat, res.out_range.0, res.out_range.1);
    let report = FitReport {
        config: FitConfig {
            command: "fit",
            data: args.data.display().to_string(),
            dx: args.dx,
            seed: args.seed,
            penalty: args.penalty,
            estimator: args.estimator,
            grid: args.grid,
            rho: args.rho,
            kmax: args.kmax,
            folds: args.folds,
            draws: args.draws,
            gamma: args.gamma,
            iota: args.iota,
            out: args.out.display().to_string(),
        },
        selection_table: res.table.clone(),
        chosen: Chosen {
            h_hat: res.h_hat,
            k_hat: res.k_hat,
            welfare: row.welfare,
            rad_penalty: row.rad_penalty,
            tau: row.tau,
            bias_penalty: row.bias_penalty,
            q: row.q,
            estimator: res.estimator,
            penalty: res.penalty,
        },
        policy: PolicyFile::from_parts(&fam, &res.policy, &ds.x_scale),
        diagnostics: FitDiagnostics {
            version: version().to_string(),
            n: ds.n(),
            d_x: ds.d_x,
            r_hat: fit.r_hat,
            v_hat: fit.v_hat,
            gamma: fit.gamma,
            bias_degenerate: fit.degenerate,
            grid: grid.values.clone(),
        },
    };
    write_report(&args.out, &report)
}

// ----------------------------------------------------------- biasbound --

#[derive(Serialize)]
struct BiasConfig {
    command: &'static str,
    data: String,
    dx: usize,
    seed: u64,
    grid: crate::args::GridArg,
    rho: f64,
    gamma: f64,
    out: String,
}

#[derive(Serialize)]
struct BiasRow {
    h: f64,
    bound: f64,
    penalty: f64,
}

#[derive(Serialize)]
struct BiasSummary {
    r_hat: u32,
    v_hat: f64,
    gamma: f64,
    degenerate: bool,
}

#[derive(Serialize)]
struct BiasDiagnostics {
    version: String,
    n: usize,
    d_x: usize,
    noise_scale: f64,
}

#[derive(Serialize)]
struct BiasReport {
    config: BiasConfig,
    bias: BiasSummary,
    bias_bounds: Vec<BiasRow>,
    diagnostics: BiasDiagnostics,
}

pub fn run_biasbound(args: &BiasboundArgs) -> Result<(), CliError> {
    if args.dx == 0 {
        return Err(CliError::Config("--dx must be at least 1".into()));
    }
    positive("rho", args.rho)?;
    if !(args.gamma.is_finite() && args.gamma >= 0.0) {
        return Err(CliError::Config(format!("--gamma must be nonnegative, got {}", args.gamma)));
    }
    let ds = load_and_rescale(&args.data, args.dx)?;
    let curve = MuFtCurve::estimate(&ds, mix(args.seed, &[BIAS_CURVE_SALT]))?;
    let mut fit = fit_envelope(&curve, ds.n(), R_MAX)?;
    fit.gamma = args.gamma;
    let grid = make_grid(args.grid.into(), args.rho, ds.n(), fit.r_hat)?;
    let bias_bounds = grid
        .values
        .iter()
        .map(|&h| -> Result<BiasRow, CliError> {
            let bound = bias_bound(h, fit.r_hat, fit.v_hat)?;
            Ok(BiasRow { h, bound, penalty: (1.0 + fit.gamma) * bound })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let report = BiasReport {
        config: BiasConfig {
            command: "biasbound",
            data: args.data.display().to_string(),
            dx: args.dx,
            seed: args.seed,
            grid: args.grid,
            rho: args.rho,
            gamma: args.gamma,
            out: args.out.display().to_string(),
        },
        bias: BiasSummary {
            r_hat: fit.r_hat,
            v_hat: fit.v_hat,
            gamma: fit.gamma,
            degenerate: fit.degenerate,
        },
        bias_bounds,
        diagnostics: BiasDiagnostics {
            version: version().to_string(),
            n: ds.n(),
            d_x: ds.d_x,
            noise_scale: curve.noise_scale,
        },
    };
    write_report(&args.out, &report)
}

// ------------------------------------------------------------ evaluate --

#[derive(Serialize)]
struct EvaluateConfig {
    command: &'static str,
    policy: String,
    data: String,
    out: String,
}

#[derive(Serialize)]
struct EvalRow {
    row: usize,
    treatment: f64,
}

#[derive(Serialize)]
struct EvaluateDiagnostics {
    version: String,
    n: usize,
    d_x: usize,
    k: usize,
}

#[derive(Serialize)]
struct EvaluateReport {
    config: EvaluateConfig,
    treatments: Vec<EvalRow>,
    mean_treatment: f64,
    diagnostics: EvaluateDiagnostics,
}

pub fn run_evaluate(args: &EvaluateArgs) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&args.policy)
        .map_err(|e| CliError::Io(format!("reading `{}`: {e}", args.policy.display())))?;
    let pf = PolicyFile::from_json(&text)?;
    let fam = pf.family()?;
    let params = PolicyParams::new(pf.theta.clone(), &fam)?;
    for (p, s) in pf.x_scale.iter().enumerate() {
        if !(s[1] > s[0]) {
            return Err(CliError::Config(format!(
                "policy x_scale column {} has empty range [{}, {}]",
                p + 1,
                s[0],
                s[1]
            )));
        }
    }
    // Covariates come in on the policy's original scale and are mapped
    // through the *training* scale, not the new sample's.
    let ds = load_csv(&args.data, pf.d_x)?;
    let treatments = ds
        .rows
        .iter()
        .enumerate()
        .map(|(i, obs)| -> Result<EvalRow, CliError> {
            let scaled: Vec<f64> = obs
                .x
                .iter()
                .zip(&pf.x_scale)
                .map(|(&v, s)| (v - s[0]) / (s[1] - s[0]))
                .collect();
            let treatment = eval_policy(&fam, &params, &scaled)?;
            Ok(EvalRow { row: i + 1, treatment })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let values: Vec<f64> = treatments.iter().map(|r| r.treatment).collect();
    let report = EvaluateReport {
        config: EvaluateConfig {
            command: "evaluate",
            policy: args.policy.display().to_string(),
            data: args.data.display().to_string(),
            out: args.out.display().to_string(),
        },
        mean_treatment: mean(&values),
        treatments,
        diagnostics: EvaluateDiagnostics {
            version: version().to_string(),
            n: ds.n(),
            d_x: pf.d_x,
            k: pf.k,
        },
    };
    write_report(&args.out, &report)
}

// ------------------------------------------------------------ simulate --

#[derive(Serialize)]
struct SimulateConfig {
    command: &'static str,
    dgp: DgpArg,
    n: Vec<usize>,
    reps: usize,
    seed: u64,
    noise_sd: f64,
    dx: usize,
    penalty: crate::args::PenaltyArg,
    estimator: EstimatorArg,
    grid: crate::args::GridArg,
    rho: f64,
    kmax: usize,
    folds: usize,
    draws: usize,
    iota: f64,
    estimate_bias: bool,
    out: String,
    report: String,
}

#[derive(Serialize)]
struct SummaryRow {
    n: usize,
    penalty: PenaltyKind,
    estimator: EstimatorKind,
    reps: usize,
    mean_regret: f64,
    median_regret: f64,
    mean_h_hat: f64,
    mean_k_hat: f64,
}

#[derive(Serialize)]
struct SimulateDiagnostics {
    version: String,
    oracle_welfare: f64,
    dgp_spec: DgpSpec,
}

#[derive(Serialize)]
struct SimulateReport {
    config: SimulateConfig,
    summary: Vec<SummaryRow>,
    diagnostics: SimulateDiagnostics,
}

fn dgp_spec(dgp: DgpArg, dx: usize, noise_sd: f64) -> DgpSpec {
    match dgp {
        DgpArg::Linear => DgpSpec::linear(dx, noise_sd),
        DgpArg::Tent => DgpSpec::tent(1.0, dx, noise_sd),
        DgpArg::Quad => DgpSpec::smooth_quadratic(1.0, 1.0, dx, noise_sd),
        DgpArg::Sepmono => DgpSpec::separable_monotone(1.0, dx, noise_sd),
    }
}

fn summarize(records: &[RegretRecord]) -> Vec<SummaryRow> {
    let mut keys: Vec<(usize, PenaltyKind, EstimatorKind)> = Vec::new();
    for r in records {
        let key = (r.n, r.penalty, r.estimator);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(n, penalty, estimator)| {
            let group: Vec<&RegretRecord> = records
                .iter()
                .filter(|r| r.n == n && r.penalty == penalty && r.estimator == estimator)
                .collect();
            let regrets: Vec<f64> = group.iter().map(|r| r.regret).collect();
            let hs: Vec<f64> = group.iter().map(|r| r.h_hat).collect();
            let ks = pairwise_sum(&group.iter().map(|r| r.k_hat as f64).collect::<Vec<_>>());
            SummaryRow {
                n,
                penalty,
                estimator,
                reps: group.len(),
                mean_regret: mean(&regrets),
                median_regret: median(&regrets),
                mean_h_hat: mean(&hs),
                mean_k_hat: ks / group.len() as f64,
            }
        })
        .collect()
}

pub fn run_simulate(args: &SimulateArgs) -> Result<(), CliError> {
    check_common_knobs(args.dx, args.kmax, args.folds, args.draws, args.iota, args.rho, 0.0)?;
    if args.n.is_empty() {
        return Err(CliError::Config("--n needs at least one sample size".into()));
    }
    if args.reps == 0 {
        return Err(CliError::Config("--reps must be at least 1".into()));
    }
    if !(args.noise_sd.is_finite() && args.noise_sd >= 0.0) {
        return Err(CliError::Config(format!(
            "--noise-sd must be nonnegative, got {}",
            args.noise_sd
        )));
    }
    let spec = dgp_spec(args.dgp, args.dx, args.noise_sd);
    let estimator = match args.estimator {
        EstimatorArg::Ipw => SimEstimator::IpwKnown,
        EstimatorArg::Dd => SimEstimator::DoubleDebiased,
    };
    let cfg = RegretConfig {
        grid_kind: args.grid.into(),
        rho: args.rho,
        combos: vec![(args.penalty.into(), estimator)],
        selection: selection_config(args.seed, args.kmax, args.folds, args.draws, args.iota),
        use_known_bias: !args.estimate_bias,
    };
    let records = run_regret_experiment(&spec, &args.n, args.reps, &cfg)?;
    let mut csv_bytes = Vec::new();
    write_regret_csv(&records, &mut csv_bytes)
        .map_err(|e| CliError::Io(format!("encoding regret csv: {e}")))?;
    write_atomic(&args.out, &csv_bytes)?;
    let report = SimulateReport {
        config: SimulateConfig {
            command: "simulate",
            dgp: args.dgp,
            n: args.n.clone(),
            reps: args.reps,
            seed: args.seed,
            noise_sd: args.noise_sd,
            dx: args.dx,
            penalty: args.penalty,
            estimator: args.estimator,
            grid: args.grid,
            rho: args.rho,
            kmax: args.kmax,
            folds: args.folds,
            draws: args.draws,
            iota: args.iota,
            estimate_bias: args.estimate_bias,
            out: args.out.display().to_string(),
            report: args.report.display().to_string(),
        },
        summary: summarize(&records),
        diagnostics: SimulateDiagnostics {
            version: version().to_string(),
            oracle_welfare: records.first().map(|r| r.oracle_welfare).unwrap_or(f64::NAN),
            dgp_spec: spec,
        },
    };
    write_report(&args.report, &report)
}
