//! Joint data-driven selection of bandwidth h and sieve dimension k.
//!
//! Candidate pairs are scored by penalized welfare
//! Q(h, k) = W_hat(pi_hat_{h,k}) - (R_hat + tau + B_hat): the empirical
//! welfare of the sieve maximizer minus a Rademacher complexity estimate,
//! a technical term tau(h, k, n), and the inflated smoothing-bias bound.
//! The selected pair maximizes Q over the admissible set
//! vc_bound(k) <= n h^2. A holdout variant replaces the Rademacher term
//! with out-of-sample evaluation on a testing split.

use crate::biasbound::{estimate_bias_penalty, BiasBoundFit};
use crate::data::{Dataset, PropensityOracle};
use crate::error::SelectionError;
use crate::nuisance::{CondDensityRatio, NuisanceConfig, NuisanceFit};
use crate::num::pairwise_sum;
use crate::optimizer::{
    maximize_space, ObjectivePoint, OptimizerConfig, PointObjective, PolicySpace,
    WeightedObjective,
};
use crate::rng::{mix, stream};
use crate::sieve::{vc_bound, MonotoneSeparableFamily, PolicyParams};
use crate::welfare::{
    dd_welfare, fit_nuisances, ipw_welfare, make_folds, DdObjective, EstimatorKind,
    FoldPlan,
};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

const RAD_SIGN_SALT: u64 = 0x7261_6473;
const RAD_OPT_SALT: u64 = 0x726f_7074;
const EWM_SALT: u64 = 0x6577_6d73;
const RAD_H_SALT: u64 = 0x7261_6468;
const HOLD_SPLIT_SALT: u64 = 0x686f_6c64;
const DD_FOLD_SALT: u64 = 0x6464_666c;
const HOLD_DD_SALT: u64 = 0x6864_6466;

/// Minimum rows on the estimating side of a holdout split.
pub const MIN_ESTIMATING_ROWS: usize = 20;

/// Bandwidth grid family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridKind {
    /// h = rho^{-j}, j = 0, 1, 2, ...
    Exponential,
    /// h = j^{-rho}, j = 1, 2, 3, ...
    Geometric,
}

/// Candidate bandwidths, largest first.
#[derive(Debug, Clone)]
pub struct BandwidthGrid {
    /// Grid family.
    pub kind: GridKind,
    /// Ratio / decay parameter.
    pub rho: f64,
    /// Lower cutoff n^{-1/(2 r_hat + 1)}.
    pub h_min: f64,
    /// Bandwidths in (0, 1], sorted descending, all >= h_min.
    pub values: Vec<f64>,
}

/// Enumerate the bandwidth grid, keeping h in [n^{-1/(2 r_hat + 1)}, 1].
pub fn make_grid(
    kind: GridKind,
    rho: f64,
    n: usize,
    r_hat: u32,
) -> Result<BandwidthGrid, SelectionError> {
    match kind {
        GridKind::Exponential if rho <= 1.0 => return Err(SelectionError::BadRho(rho)),
        GridKind::Geometric if rho <= 0.0 => return Err(SelectionError::BadRho(rho)),
        _ => {}
    }
    let h_min = (n as f64).powf(-1.0 / (2.0 * r_hat as f64 + 1.0));
    if h_min > 1.0 {
        return Err(SelectionError::EmptyGrid { h_min });
    }
    let mut values = Vec::new();
    match kind {
        GridKind::Exponential => {
            let mut j = 0;
            loop {
                let h = rho.powi(-j);
                if h < h_min {
                    break;
                }
                if h <= 1.0 {
                    values.push(h);
                }
                j += 1;
            }
        }
        GridKind::Geometric => {
            let mut j = 1u32;
            loop {
                let h = (j as f64).powf(-rho);
                if h < h_min {
                    break;
                }
                if h <= 1.0 {
                    values.push(h);
                }
                j += 1;
            }
        }
    }
    if values.is_empty() {
        return Err(SelectionError::EmptyGrid { h_min });
    }
    Ok(BandwidthGrid { kind, rho, h_min, values })
}

/// Growth multipliers for the technical-term sequences.
#[derive(Debug, Clone, Copy)]
pub struct LambdaConfig {
    /// Multiplier on lambda_k = log(1 + log(1 + k)).
    pub k_mult: f64,
    /// Multiplier on lambda_h = log(1 + log(1 + 1/h)).
    pub h_mult: f64,
}

impl Default for LambdaConfig {
    fn default() -> Self {
        Self { k_mult: 1.0, h_mult: 1.0 }
    }
}

/// Technical penalty tau = sqrt((lambda_k log k - lambda_h log h)/(n h)),
/// clamped below 1. The default sequences grow doubly-logarithmically —
/// the slowest admissible divergence, so tau stays dominated by the
/// variance scale 1/sqrt(n h).
pub fn tau(h: f64, k: usize, n: usize, lambda: &LambdaConfig) -> f64 {
    assert!(h > 0.0 && h <= 1.0, "bandwidth must lie in (0, 1]");
    assert!(k >= 1, "sieve dimension must be >= 1");
    let lambda_k = lambda.k_mult * (1.0 + (1.0 + k as f64).ln()).ln();
    let lambda_h = lambda.h_mult * (1.0 + (1.0 + 1.0 / h).ln()).ln();
    let radicand = (lambda_k * (k as f64).ln() - lambda_h * h.ln()) / (n as f64 * h);
    radicand.sqrt().min(1.0 - 1e-12)
}

/// View of a base objective restricted to a subset of points, each scaled
/// by a fixed factor (the 2 sigma_i sign weights of a Rademacher draw).
struct SignedSubsetObjective<'a> {
    base: &'a dyn PointObjective,
    members: &'a [usize],
    factors: &'a [f64],
}

impl PointObjective for SignedSubsetObjective<'_> {
    fn n_points(&self) -> usize {
        self.members.len()
    }

    fn x(&self, i: usize) -> &[f64] {
        self.base.x(self.members[i])
    }

    fn anchor(&self, i: usize) -> f64 {
        self.base.anchor(self.members[i])
    }

    fn eval(&self, i: usize, v: f64) -> (f64, f64) {
        let (val, grad) = self.base.eval(self.members[i], v);
        (self.factors[i] * val, self.factors[i] * grad)
    }
}

fn signed_sup(
    base: &dyn PointObjective,
    members: &[usize],
    factors: &[f64],
    space: &PolicySpace,
    cfg: &OptimizerConfig,
) -> Result<f64, SelectionError> {
    let obj = SignedSubsetObjective { base, members, factors };
    let (_theta, value) = maximize_space(&obj, space, cfg)?;
    Ok(value)
}

fn draw_signs(seed: u64, draw: u64, n: usize) -> Vec<f64> {
    let mut rng = stream(seed, &[RAD_SIGN_SALT, draw]);
    (0..n).map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 }).collect()
}

fn space_key(space: &PolicySpace) -> u64 {
    match space {
        PolicySpace::Monotone(f) => f.k as u64,
        PolicySpace::Constant { .. } => 0,
    }
}

/// Rademacher complexity estimate for the IPW objective with explicit
/// sign vectors: the average over draws of
/// sup_pi (2/(n h)) sum_i sigma_i w_i K((T_i - pi(X_i))/h). Useful for
/// exhaustive small-n oracles; `rademacher_penalty` draws the signs.
pub fn rademacher_exact_signs(
    ds: &Dataset,
    space: &PolicySpace,
    h: f64,
    weights: &[f64],
    signs: &[Vec<f64>],
    seed: u64,
    cfg: &OptimizerConfig,
) -> Result<f64, SelectionError> {
    assert_eq!(weights.len(), ds.n());
    let points: Vec<ObjectivePoint> = ds
        .rows
        .iter()
        .zip(weights)
        .map(|(o, &w)| ObjectivePoint { t: o.t, x: o.x.clone(), w })
        .collect();
    let base = WeightedObjective::new(points, h).map_err(SelectionError::Optimizer)?;
    let members: Vec<usize> = (0..ds.n()).collect();
    let key = space_key(space);
    let sups: Vec<f64> = signs
        .par_iter()
        .enumerate()
        .map(|(j, sigma)| {
            assert_eq!(sigma.len(), ds.n());
            let factors: Vec<f64> = sigma.iter().map(|s| 2.0 * s).collect();
            let cfg_j = OptimizerConfig {
                seed: mix(seed, &[RAD_OPT_SALT, key, j as u64]),
                ..*cfg
            };
            signed_sup(&base, &members, &factors, space, &cfg_j)
        })
        .collect::<Result<_, _>>()?;
    Ok(pairwise_sum(&sups) / sups.len() as f64)
}

/// Monte Carlo Rademacher penalty for the IPW objective. Sign draws are
/// keyed by (seed, draw) only, so different sieve dimensions evaluated
/// under the same seed share sign vectors; optimizer streams are
/// additionally keyed by the space, keeping searches independent.
pub fn rademacher_penalty(
    ds: &Dataset,
    space: &PolicySpace,
    h: f64,
    weights: &[f64],
    n_draws: usize,
    seed: u64,
    cfg: &OptimizerConfig,
) -> Result<f64, SelectionError> {
    assert!(n_draws >= 1, "need at least one sign draw");
    let signs: Vec<Vec<f64>> =
        (0..n_draws).map(|j| draw_signs(seed, j as u64, ds.n())).collect();
    rademacher_exact_signs(ds, space, h, weights, &signs, seed, cfg)
}

/// Cross-fit Rademacher penalty for the double-debiased objective:
/// per draw and fold, sup_pi (2 L / n) sum_{i in fold} sigma_i
/// Gamma_{h,i}(pi) with complement-fitted nuisances; averaged over folds,
/// then over draws.
pub fn rademacher_penalty_dd(
    ds: &Dataset,
    space: &PolicySpace,
    h: f64,
    fits: &[NuisanceFit],
    plan: &FoldPlan,
    n_draws: usize,
    seed: u64,
    cfg: &OptimizerConfig,
) -> Result<f64, SelectionError> {
    assert!(n_draws >= 1, "need at least one sign draw");
    let base = DdObjective::new(ds, plan, fits, h).map_err(SelectionError::Welfare)?;
    let folds: Vec<Vec<usize>> = (0..plan.l).map(|f| plan.indices_of(f)).collect();
    let l = plan.l as f64;
    let key = space_key(space);
    let per_draw: Vec<f64> = (0..n_draws)
        .into_par_iter()
        .map(|j| -> Result<f64, SelectionError> {
            let sigma = draw_signs(seed, j as u64, ds.n());
            let mut fold_sups = Vec::with_capacity(plan.l);
            for (fold, members) in folds.iter().enumerate() {
                let factors: Vec<f64> =
                    members.iter().map(|&i| 2.0 * sigma[i] * l).collect();
                let cfg_jf = OptimizerConfig {
                    seed: mix(seed, &[RAD_OPT_SALT, key, j as u64, fold as u64]),
                    ..*cfg
                };
                fold_sups.push(signed_sup(&base, members, &factors, space, &cfg_jf)?);
            }
            Ok(pairwise_sum(&fold_sups) / l)
        })
        .collect::<Result<_, _>>()?;
    Ok(pairwise_sum(&per_draw) / per_draw.len() as f64)
}

/// Penalty family used by the selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PenaltyKind {
    /// Monte Carlo Rademacher complexity.
    Rademacher,
    /// Out-of-sample evaluation on a testing split.
    Holdout,
}

/// Welfare estimator driving the selection.
pub enum EstimatorSpec<'a> {
    /// IPW with a known propensity (simulations, designed experiments).
    IpwKnown(&'a PropensityOracle),
    /// IPW with a plug-in inverse density fit on the estimation sample.
    IpwPlugin,
    /// Cross-fitted double-debiased scores.
    DoubleDebiased,
}

impl EstimatorSpec<'_> {
    fn kind(&self) -> EstimatorKind {
        match self {
            EstimatorSpec::DoubleDebiased => EstimatorKind::DoubleDebiased,
            _ => EstimatorKind::Ipw,
        }
    }
}

/// One scored (h, k) cell.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PenalizedScore {
    /// Bandwidth.
    pub h: f64,
    /// Sieve dimension.
    pub k: usize,
    /// Estimated welfare of the cell's empirical maximizer.
    pub welfare: f64,
    /// Rademacher penalty (zero under holdout scoring).
    pub rad_penalty: f64,
    /// Technical term.
    pub tau: f64,
    /// Inflated bias bound.
    pub bias_penalty: f64,
    /// Penalized welfare: welfare - (rad_penalty + tau + bias_penalty).
    pub q: f64,
}

/// Outcome of a selection run.
#[derive(Debug, Clone)]
pub struct SelectionResult {
    /// All admissible cells, scored.
    pub table: Vec<PenalizedScore>,
    /// Selected bandwidth.
    pub h_hat: f64,
    /// Selected sieve dimension.
    pub k_hat: usize,
    /// The selected cell's fitted policy.
    pub policy: PolicyParams,
    /// Estimator variant used.
    pub estimator: EstimatorKind,
    /// Penalty variant used.
    pub penalty: PenaltyKind,
    /// Output clamp (t_lo, t_hi) of the family the policy was fitted in;
    /// rebuild the family with exactly these bounds to evaluate the policy.
    pub out_range: (f64, f64),
}

/// Controls for [`select`] and [`holdout_select`].
#[derive(Debug, Clone)]
pub struct SelectionConfig {
    /// Master seed.
    pub seed: u64,
    /// Rademacher sign draws per cell.
    pub n_draws: usize,
    /// Cross-fitting folds for the double-debiased estimator.
    pub folds: usize,
    /// Testing fraction for holdout scoring.
    pub iota: f64,
    /// Sieve dimensions searched.
    pub k_values: Vec<usize>,
    /// Optimizer budget for the main welfare maximization.
    pub optimizer: OptimizerConfig,
    /// Cheaper optimizer budget per Rademacher draw.
    pub rad_optimizer: OptimizerConfig,
    /// Technical-term sequences.
    pub lambda: LambdaConfig,
    /// Nuisance fitting controls.
    pub nuisance: NuisanceConfig,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_draws: 100,
            folds: 5,
            iota: 0.2,
            k_values: (1..=8).collect(),
            optimizer: OptimizerConfig::default(),
            rad_optimizer: OptimizerConfig {
                n_starts: 6,
                max_iters: 80,
                tol: 1e-6,
                ..OptimizerConfig::default()
            },
            lambda: LambdaConfig::default(),
            nuisance: NuisanceConfig::default(),
        }
    }
}

/// Shared per-estimator state for one selection pass.
enum EstimatorState {
    Ipw { weights: Vec<f64>, plugin_oracle: Option<PropensityOracle> },
    Dd { plan: FoldPlan, fits: Vec<NuisanceFit> },
}

fn prepare_estimator(
    ds: &Dataset,
    estimator: &EstimatorSpec,
    cfg: &SelectionConfig,
) -> Result<EstimatorState, SelectionError> {
    Ok(match estimator {
        EstimatorSpec::IpwKnown(oracle) => EstimatorState::Ipw {
            weights: ds
                .rows
                .iter()
                .map(|o| o.y * oracle.g(o.t, &o.x))
                .collect(),
            plugin_oracle: None,
        },
        EstimatorSpec::IpwPlugin => {
            let t: Vec<f64> = ds.rows.iter().map(|o| o.t).collect();
            let x: Vec<&[f64]> = ds.rows.iter().map(|o| o.x.as_slice()).collect();
            let fit = CondDensityRatio::fit(&t, &x);
            let weights = ds
                .rows
                .iter()
                .map(|o| o.y * fit.g(o.t, &o.x))
                .collect();
            let floor = fit.f_lower_hat;
            let oracle = PropensityOracle::new(
                floor,
                std::sync::Arc::new(move |tt, xx: &[f64]| fit.density(tt, xx)),
            );
            EstimatorState::Ipw { weights, plugin_oracle: Some(oracle) }
        }
        EstimatorSpec::DoubleDebiased => {
            let plan = make_folds(ds.n(), cfg.folds, mix(cfg.seed, &[DD_FOLD_SALT]))
                .map_err(SelectionError::Welfare)?;
            let fits = fit_nuisances(ds, &plan, &cfg.nuisance)
                .map_err(SelectionError::Welfare)?;
            EstimatorState::Dd { plan, fits }
        }
    })
}

/// Admissible (h-index, k) cells under vc_bound(k) <= n h^2.
fn admissible_cells(
    grid: &BandwidthGrid,
    k_values: &[usize],
    d_x: usize,
    n: usize,
) -> Vec<(usize, usize)> {
    let mut cells = Vec::new();
    for (h_idx, &h) in grid.values.iter().enumerate() {
        for &k in k_values {
            let fam = MonotoneSeparableFamily::new(d_x, k, 0.0, 1.0);
            if vc_bound(&fam) as f64 <= n as f64 * h * h {
                cells.push((h_idx, k));
            }
        }
    }
    cells
}

struct ScoredCell {
    row: PenalizedScore,
    theta: Vec<f64>,
}

/// Total preference order on scored cells: larger q, then smaller k, then
/// larger h, then lexicographically smaller theta.
fn better_cell(a: &ScoredCell, b: &ScoredCell) -> bool {
    if a.row.q != b.row.q {
        return a.row.q > b.row.q;
    }
    if a.row.k != b.row.k {
        return a.row.k < b.row.k;
    }
    if a.row.h != b.row.h {
        return a.row.h > b.row.h;
    }
    for (ai, bi) in a.theta.iter().zip(&b.theta) {
        if ai != bi {
            return ai < bi;
        }
    }
    false
}

fn pick_winner(
    mut cells: Vec<ScoredCell>,
    estimator: EstimatorKind,
    penalty: PenaltyKind,
    out_range: (f64, f64),
) -> Result<SelectionResult, SelectionError> {
    if cells.is_empty() {
        return Err(SelectionError::NoAdmissiblePair);
    }
    let mut best = 0;
    for i in 1..cells.len() {
        if better_cell(&cells[i], &cells[best]) {
            best = i;
        }
    }
    let winner = cells.swap_remove(best);
    let mut table: Vec<PenalizedScore> = cells.iter().map(|c| c.row).collect();
    table.push(winner.row);
    table.sort_by(|a, b| {
        b.h.partial_cmp(&a.h).unwrap().then(a.k.cmp(&b.k))
    });
    Ok(SelectionResult {
        table,
        h_hat: winner.row.h,
        k_hat: winner.row.k,
        policy: PolicyParams { theta: winner.theta },
        estimator,
        penalty,
        out_range,
    })
}

/// Penalized selection of (h, k): every admissible cell gets a sieve
/// welfare maximization, a Rademacher penalty, the technical term, and
/// the bias penalty; the argmax row wins. `PenaltyKind::Holdout`
/// delegates to [`holdout_select`] with the configured testing fraction.
pub fn select(
    ds: &Dataset,
    grid: &BandwidthGrid,
    penalty: PenaltyKind,
    estimator: &EstimatorSpec,
    bias_fit: &BiasBoundFit,
    cfg: &SelectionConfig,
) -> Result<SelectionResult, SelectionError> {
    if penalty == PenaltyKind::Holdout {
        return holdout_select(ds, cfg.iota, grid, estimator, bias_fit, cfg);
    }
    assert!(ds.d_x >= 1, "selection needs at least one covariate");
    let n = ds.n();
    let cells = admissible_cells(grid, &cfg.k_values, ds.d_x, n);
    if cells.is_empty() {
        return Err(SelectionError::NoAdmissiblePair);
    }
    let state = prepare_estimator(ds, estimator, cfg)?;

    let mut scored: Vec<ScoredCell> = Vec::with_capacity(cells.len());
    for (h_idx, &h) in grid.values.iter().enumerate() {
        let ks: Vec<usize> = cells
            .iter()
            .filter(|&&(hi, _)| hi == h_idx)
            .map(|&(_, k)| k)
            .collect();
        if ks.is_empty() {
            continue;
        }
        // Per-bandwidth shared base objective; Rademacher sign draws are
        // keyed by (seed, h) so all k at this h share them.
        let seed_h = mix(cfg.seed, &[RAD_H_SALT, h_idx as u64]);
        let ipw_base: Option<WeightedObjective> = match &state {
            EstimatorState::Ipw { weights, .. } => Some(
                WeightedObjective::new(
                    ds.rows
                        .iter()
                        .zip(weights)
                        .map(|(o, &w)| ObjectivePoint { t: o.t, x: o.x.clone(), w })
                        .collect(),
                    h,
                )
                .map_err(SelectionError::Optimizer)?,
            ),
            EstimatorState::Dd { .. } => None,
        };
        let dd_base: Option<DdObjective> = match &state {
            EstimatorState::Dd { plan, fits } => Some(
                DdObjective::new(ds, plan, fits, h).map_err(SelectionError::Welfare)?,
            ),
            EstimatorState::Ipw { .. } => None,
        };

        let rows: Vec<ScoredCell> = ks
            .par_iter()
            .map(|&k| -> Result<ScoredCell, SelectionError> {
                let fam = MonotoneSeparableFamily::new(ds.d_x, k, ds.t_lo, ds.t_hi);
                let space = PolicySpace::Monotone(fam);
                let ewm_cfg = OptimizerConfig {
                    seed: mix(cfg.seed, &[EWM_SALT, h_idx as u64, k as u64]),
                    ..cfg.optimizer
                };
                let base: &dyn PointObjective = match (&ipw_base, &dd_base) {
                    (Some(b), _) => b,
                    (_, Some(b)) => b,
                    _ => unreachable!(),
                };
                let (theta, welfare) = maximize_space(base, &space, &ewm_cfg)
                    .map_err(SelectionError::Optimizer)?;
                let rad_penalty = match &state {
                    EstimatorState::Ipw { weights, .. } => rademacher_penalty(
                        ds,
                        &space,
                        h,
                        weights,
                        cfg.n_draws,
                        seed_h,
                        &cfg.rad_optimizer,
                    )?,
                    EstimatorState::Dd { plan, fits } => rademacher_penalty_dd(
                        ds,
                        &space,
                        h,
                        fits,
                        plan,
                        cfg.n_draws,
                        seed_h,
                        &cfg.rad_optimizer,
                    )?,
                };
                let tau_v = tau(h, k, n, &cfg.lambda);
                let bias_penalty =
                    estimate_bias_penalty(h, bias_fit).map_err(SelectionError::BiasBound)?;
                let q = welfare - (rad_penalty + tau_v + bias_penalty);
                Ok(ScoredCell {
                    row: PenalizedScore {
                        h,
                        k,
                        welfare,
                        rad_penalty,
                        tau: tau_v,
                        bias_penalty,
                        q,
                    },
                    theta,
                })
            })
            .collect::<Result<_, _>>()?;
        scored.extend(rows);
    }
    pick_winner(scored, estimator.kind(), penalty, (ds.t_lo, ds.t_hi))
}

/// Seeded shuffle split for holdout scoring: the first floor((1 - iota) n)
/// shuffled indices estimate, the rest test.
pub fn holdout_split(
    n: usize,
    iota: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>), SelectionError> {
    assert!(iota > 0.0 && iota < 1.0, "testing fraction must lie in (0, 1)");
    let n_e = ((1.0 - iota) * n as f64).floor() as usize;
    let n_t = n - n_e;
    if n_e < MIN_ESTIMATING_ROWS {
        return Err(SelectionError::SplitTooSmall {
            side: "estimating",
            size: n_e,
            min: MIN_ESTIMATING_ROWS,
        });
    }
    if n_t < 1 {
        return Err(SelectionError::SplitTooSmall { side: "testing", size: n_t, min: 1 });
    }
    let mut order: Vec<usize> = (0..n).collect();
    use rand::seq::SliceRandom;
    order.shuffle(&mut stream(seed, &[HOLD_SPLIT_SALT]));
    let test = order.split_off(n_e);
    Ok((order, test))
}

fn subset_dataset(ds: &Dataset, indices: &[usize]) -> Dataset {
    Dataset {
        rows: indices.iter().map(|&i| ds.rows[i].clone()).collect(),
        ..ds.clone()
    }
}

/// Holdout selection: policies are fit on the estimating split; each cell
/// is scored by testing-sample welfare minus the bias penalty and the
/// technical term evaluated at the estimating-sample size.
pub fn holdout_select(
    ds: &Dataset,
    iota: f64,
    grid: &BandwidthGrid,
    estimator: &EstimatorSpec,
    bias_fit: &BiasBoundFit,
    cfg: &SelectionConfig,
) -> Result<SelectionResult, SelectionError> {
    assert!(ds.d_x >= 1, "selection needs at least one covariate");
    let (est_idx, test_idx) = holdout_split(ds.n(), iota, cfg.seed)?;
    let ds_e = subset_dataset(ds, &est_idx);
    let ds_t = subset_dataset(ds, &test_idx);
    let n_e = ds_e.n();

    let cells = admissible_cells(grid, &cfg.k_values, ds.d_x, n_e);
    if cells.is_empty() {
        return Err(SelectionError::NoAdmissiblePair);
    }
    let state = prepare_estimator(&ds_e, estimator, cfg)?;
    // Testing-side scoring nuisance: fit once on the whole estimating
    // sample (disjoint from the testing rows, so no hygiene concern).
    let test_nuisance: Option<(Vec<NuisanceFit>, FoldPlan)> = match &state {
        EstimatorState::Dd { .. } => {
            let all: Vec<usize> = (0..n_e).collect();
            let nf =
                crate::nuisance::fit_fold_nuisances(&ds_e, &all, 0, &cfg.nuisance);
            Some((vec![nf], FoldPlan { l: 1, assignment: vec![0; ds_t.n()] }))
        }
        EstimatorState::Ipw { .. } => None,
    };

    let mut scored: Vec<ScoredCell> = Vec::with_capacity(cells.len());
    for (h_idx, &h) in grid.values.iter().enumerate() {
        let ks: Vec<usize> = cells
            .iter()
            .filter(|&&(hi, _)| hi == h_idx)
            .map(|&(_, k)| k)
            .collect();
        if ks.is_empty() {
            continue;
        }
        let ipw_base: Option<WeightedObjective> = match &state {
            EstimatorState::Ipw { weights, .. } => Some(
                WeightedObjective::new(
                    ds_e.rows
                        .iter()
                        .zip(weights)
                        .map(|(o, &w)| ObjectivePoint { t: o.t, x: o.x.clone(), w })
                        .collect(),
                    h,
                )
                .map_err(SelectionError::Optimizer)?,
            ),
            EstimatorState::Dd { .. } => None,
        };
        let dd_base: Option<DdObjective> = match &state {
            EstimatorState::Dd { plan, fits } => Some(
                DdObjective::new(&ds_e, plan, fits, h)
                    .map_err(SelectionError::Welfare)?,
            ),
            EstimatorState::Ipw { .. } => None,
        };

        let rows: Vec<ScoredCell> = ks
            .par_iter()
            .map(|&k| -> Result<ScoredCell, SelectionError> {
                let fam = MonotoneSeparableFamily::new(ds.d_x, k, ds.t_lo, ds.t_hi);
                let space = PolicySpace::Monotone(fam);
                let ewm_cfg = OptimizerConfig {
                    seed: mix(cfg.seed, &[HOLD_DD_SALT, EWM_SALT, h_idx as u64, k as u64]),
                    ..cfg.optimizer
                };
                let base: &dyn PointObjective = match (&ipw_base, &dd_base) {
                    (Some(b), _) => b,
                    (_, Some(b)) => b,
                    _ => unreachable!(),
                };
                let (theta, _in_sample) = maximize_space(base, &space, &ewm_cfg)
                    .map_err(SelectionError::Optimizer)?;
                let params = PolicyParams { theta: theta.clone() };
                let policy = |x: &[f64]| {
                    crate::sieve::eval_policy(&fam, &params, x).expect("dims checked")
                };
                let welfare = match (&state, &test_nuisance) {
                    (EstimatorState::Ipw { plugin_oracle, .. }, _) => {
                        // Known oracle when supplied; otherwise the plug-in
                        // density fit on the estimating sample.
                        let est = match (estimator, plugin_oracle) {
                            (EstimatorSpec::IpwKnown(oracle), _) => {
                                ipw_welfare(&ds_t, policy, h, oracle)
                            }
                            (_, Some(oracle)) => ipw_welfare(&ds_t, policy, h, oracle),
                            _ => unreachable!(),
                        };
                        est.map_err(SelectionError::Welfare)?.value
                    }
                    (EstimatorState::Dd { .. }, Some((fits_t, plan_t))) => {
                        dd_welfare(&ds_t, policy, h, fits_t, plan_t)
                            .map_err(SelectionError::Welfare)?
                            .value
                    }
                    _ => unreachable!(),
                };
                let tau_v = tau(h, k, n_e, &cfg.lambda);
                let bias_penalty =
                    estimate_bias_penalty(h, bias_fit).map_err(SelectionError::BiasBound)?;
                let rad_penalty = 0.0;
                let q = welfare - (rad_penalty + tau_v + bias_penalty);
                Ok(ScoredCell {
                    row: PenalizedScore {
                        h,
                        k,
                        welfare,
                        rad_penalty,
                        tau: tau_v,
                        bias_penalty,
                        q,
                    },
                    theta,
                })
            })
            .collect::<Result<_, _>>()?;
        scored.extend(rows);
    }
    pick_winner(scored, estimator.kind(), PenaltyKind::Holdout, (ds.t_lo, ds.t_hi))
}
