//! Welfare estimation: kernel-smoothed IPW and double-debiased scores.
//!
//! Both estimators target W(pi) = E[Y(pi(X))] for a deterministic policy pi
//! mapping covariates to a treatment level. The IPW form reweights by the
//! inverse conditional density of the observed treatment; the
//! double-debiased form adds a regression adjustment and is estimated with
//! cross-fitting so that each observation is scored with nuisances fit on
//! data that excludes its own fold.

use crate::data::{Dataset, PropensityOracle};
use crate::error::WelfareError;
use crate::kernel::FlatTopKernel;
use crate::nuisance::{fit_fold_nuisances, MHat, NuisanceConfig, NuisanceFit};
use crate::num::pairwise_sum;
use crate::optimizer::{ObjectivePoint, PointObjective};
use crate::rng;
use rayon::prelude::*;

const FOLD_SALT: u64 = 0x666f_6c64_7331;

/// Which estimator produced a welfare value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    /// Kernel-smoothed inverse-propensity weighting.
    Ipw,
    /// Cross-fitted double-debiased score.
    DoubleDebiased,
}

/// A point estimate of policy welfare.
#[derive(Debug, Clone, Copy)]
pub struct WelfareEstimate {
    /// Estimated welfare.
    pub value: f64,
    /// Smoothing bandwidth used.
    pub h: f64,
    /// Observations contributing to the estimate.
    pub n: usize,
    /// Estimator variant.
    pub estimator: EstimatorKind,
}

/// Assignment of observations to cross-fitting folds.
#[derive(Debug, Clone)]
pub struct FoldPlan {
    /// Number of folds.
    pub l: usize,
    /// fold id per observation index.
    pub assignment: Vec<usize>,
}

impl FoldPlan {
    /// Fold of observation i.
    pub fn fold_of(&self, i: usize) -> usize {
        self.assignment[i]
    }

    /// Indices belonging to a fold, ascending.
    pub fn indices_of(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] == fold)
            .collect()
    }

    /// Indices outside a fold, ascending.
    pub fn complement_of(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] != fold)
            .collect()
    }
}

/// Randomly partition n observations into `l` folds whose sizes differ by
/// at most one. Deterministic given the seed.
pub fn make_folds(n: usize, l: usize, seed: u64) -> Result<FoldPlan, WelfareError> {
    if l < 2 || l > n {
        return Err(WelfareError::BadFoldCount { folds: l, n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = rng::stream(seed, &[FOLD_SALT]);
    // Fisher-Yates; positions then map round-robin onto folds, which keeps
    // fold sizes within one of each other.
    use rand::seq::SliceRandom;
    order.shuffle(&mut rng);
    let mut assignment = vec![0usize; n];
    for (pos, &idx) in order.iter().enumerate() {
        assignment[idx] = pos % l;
    }
    Ok(FoldPlan { l, assignment })
}

/// Fit per-fold nuisances, each on its fold's complement. Fails if any
/// complement is smaller than the configured minimum.
pub fn fit_nuisances(
    ds: &Dataset,
    plan: &FoldPlan,
    cfg: &NuisanceConfig,
) -> Result<Vec<NuisanceFit>, WelfareError> {
    assert_eq!(plan.assignment.len(), ds.n(), "fold plan does not match dataset");
    let complements: Vec<Vec<usize>> = (0..plan.l).map(|f| plan.complement_of(f)).collect();
    for (fold, comp) in complements.iter().enumerate() {
        if comp.len() < cfg.min_complement {
            return Err(WelfareError::FoldTooSmall {
                fold,
                size: comp.len(),
                min: cfg.min_complement,
            });
        }
    }
    Ok(complements
        .par_iter()
        .enumerate()
        .map(|(fold, comp)| fit_fold_nuisances(ds, comp, fold, cfg))
        .collect())
}

/// Kernel-smoothed IPW welfare of a policy:
/// (1/(n h)) sum_i K((T_i - pi(X_i))/h) Y_i g(T_i, X_i).
pub fn ipw_welfare<P>(
    ds: &Dataset,
    policy: P,
    h: f64,
    g: &PropensityOracle,
) -> Result<WelfareEstimate, WelfareError>
where
    P: Fn(&[f64]) -> f64 + Sync,
{
    if !(h > 0.0) {
        return Err(WelfareError::NonPositiveBandwidth(h));
    }
    let kernel = FlatTopKernel::default();
    let terms: Vec<f64> = ds
        .rows
        .par_iter()
        .map(|obs| {
            let u = (obs.t - policy(&obs.x)) / h;
            kernel.value(u) * obs.y * g.g(obs.t, &obs.x) / h
        })
        .collect();
    Ok(WelfareEstimate {
        value: pairwise_sum(&terms) / ds.n() as f64,
        h,
        n: ds.n(),
        estimator: EstimatorKind::Ipw,
    })
}

/// Double-debiased score of one observation at policy value v = pi(x):
/// (1/h) K((t - v)/h) (y - m_hat(v, x)) g_hat(t, x) + m_hat(v, x).
pub fn dd_score(y: f64, t: f64, x: &[f64], v: f64, h: f64, nf: &NuisanceFit) -> f64 {
    let kernel = FlatTopKernel::default();
    let m = nf.m(v, x);
    kernel.value((t - v) / h) * (y - m) * nf.g(t, x) / h + m
}

/// Cross-fitted double-debiased welfare: the mean of per-observation
/// scores, each computed with the nuisance fit of the observation's fold.
pub fn dd_welfare<P>(
    ds: &Dataset,
    policy: P,
    h: f64,
    fits: &[NuisanceFit],
    plan: &FoldPlan,
) -> Result<WelfareEstimate, WelfareError>
where
    P: Fn(&[f64]) -> f64 + Sync,
{
    if !(h > 0.0) {
        return Err(WelfareError::NonPositiveBandwidth(h));
    }
    assert_eq!(plan.assignment.len(), ds.n(), "fold plan does not match dataset");
    let by_fold = fits_by_fold(fits, plan.l)?;
    let terms: Vec<f64> = ds
        .rows
        .par_iter()
        .enumerate()
        .map(|(i, obs)| {
            let nf = by_fold[plan.fold_of(i)];
            let v = policy(&obs.x);
            dd_score(obs.y, obs.t, &obs.x, v, h, nf)
        })
        .collect();
    Ok(WelfareEstimate {
        value: pairwise_sum(&terms) / ds.n() as f64,
        h,
        n: ds.n(),
        estimator: EstimatorKind::DoubleDebiased,
    })
}

/// Resolve a fold -> fit lookup, requiring every fold to be covered.
fn fits_by_fold<'a>(
    fits: &'a [NuisanceFit],
    l: usize,
) -> Result<Vec<&'a NuisanceFit>, WelfareError> {
    let mut by_fold: Vec<Option<&NuisanceFit>> = vec![None; l];
    for nf in fits {
        if nf.fold < l {
            by_fold[nf.fold] = Some(nf);
        }
    }
    by_fold
        .into_iter()
        .enumerate()
        .map(|(f, slot)| slot.ok_or(WelfareError::MissingFoldFit(f)))
        .collect()
}

/// IPW points for the policy optimizer: weight Y_i g(T_i, X_i) per
/// observation. Policy-independent, so computed once per dataset.
pub fn ipw_points(ds: &Dataset, g: &PropensityOracle) -> Vec<ObjectivePoint> {
    ds.rows
        .iter()
        .map(|obs| ObjectivePoint {
            t: obs.t,
            x: obs.x.clone(),
            w: obs.y * g.g(obs.t, &obs.x),
        })
        .collect()
}

/// Per-observation conditional-mean evaluator inside [`DdObjective`]:
/// either a precomputed row of partition cells along t, or a custom
/// closure pair.
enum MRow {
    Bins {
        /// (intercept, slope) per t-bin at this observation's covariates.
        row: Vec<(f64, f64)>,
        t_lo: f64,
        t_hi: f64,
        bound: f64,
    },
    Custom {
        eval: std::sync::Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>,
        deriv: std::sync::Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>,
    },
}

struct DdPoint {
    t: f64,
    x: Vec<f64>,
    y: f64,
    /// g_hat(t_i, x_i): policy-independent, precomputed at construction.
    g: f64,
    m: MRow,
}

impl DdPoint {
    /// (m_hat(v, x_i), d m_hat/dv).
    fn m_at(&self, v: f64) -> (f64, f64) {
        match &self.m {
            MRow::Bins { row, t_lo, t_hi, bound } => {
                let nt = row.len();
                let span = t_hi - t_lo;
                let bin = (((v - t_lo) / span * nt as f64).floor() as isize)
                    .clamp(0, nt as isize - 1) as usize;
                let (a, b) = row[bin];
                let raw = a + b * v;
                if raw.abs() > *bound {
                    (raw.clamp(-bound, *bound), 0.0)
                } else {
                    (raw, b)
                }
            }
            MRow::Custom { eval, deriv } => (eval(v, &self.x), deriv(v, &self.x)),
        }
    }
}

/// Double-debiased welfare as a per-point objective for the sieve
/// optimizer: psi_i(v) = (1/n) [ (1/h) K((t_i - v)/h) (y_i - m_hat(v, x_i))
/// g_hat(t_i, x_i) + m_hat(v, x_i) ]. The total J(theta) = sum_i psi_i
/// equals [`dd_welfare`] at the same policy.
pub struct DdObjective {
    points: Vec<DdPoint>,
    h: f64,
    kernel: FlatTopKernel,
    inv_n: f64,
}

impl DdObjective {
    /// Precompute per-observation data. g_hat values and partition rows
    /// along t are fixed here so that each objective evaluation is O(1)
    /// per point.
    pub fn new(
        ds: &Dataset,
        plan: &FoldPlan,
        fits: &[NuisanceFit],
        h: f64,
    ) -> Result<Self, WelfareError> {
        if !(h > 0.0) {
            return Err(WelfareError::NonPositiveBandwidth(h));
        }
        assert_eq!(plan.assignment.len(), ds.n(), "fold plan does not match dataset");
        let by_fold = fits_by_fold(fits, plan.l)?;
        let points: Vec<DdPoint> = ds
            .rows
            .iter()
            .enumerate()
            .map(|(i, obs)| {
                let nf = by_fold[plan.fold_of(i)];
                let m = match &nf.m_hat {
                    MHat::Partition(p) => {
                        let (t_lo, t_hi, _) = p.t_geometry();
                        MRow::Bins {
                            row: p.row_along_t(&obs.x),
                            t_lo,
                            t_hi,
                            bound: p.value_bound(),
                        }
                    }
                    MHat::Custom { eval, deriv } => MRow::Custom {
                        eval: eval.clone(),
                        deriv: deriv.clone(),
                    },
                };
                DdPoint {
                    t: obs.t,
                    x: obs.x.clone(),
                    y: obs.y,
                    g: nf.g(obs.t, &obs.x),
                    m,
                }
            })
            .collect();
        let inv_n = 1.0 / ds.n() as f64;
        Ok(Self { points, h, kernel: FlatTopKernel::default(), inv_n })
    }
}

impl PointObjective for DdObjective {
    fn n_points(&self) -> usize {
        self.points.len()
    }

    fn x(&self, i: usize) -> &[f64] {
        &self.points[i].x
    }

    fn anchor(&self, i: usize) -> f64 {
        self.points[i].t
    }

    fn eval(&self, i: usize, v: f64) -> (f64, f64) {
        let p = &self.points[i];
        let u = (p.t - v) / self.h;
        let k = self.kernel.value(u);
        let kp = self.kernel.deriv(u);
        let (m, mp) = p.m_at(v);
        let resid = p.y - m;
        let psi = self.inv_n * (k * resid * p.g / self.h + m);
        // d/dv: K'(u) du/dv = -K'/h; the m terms contribute
        // mp (1 - K g / h).
        let dpsi = self.inv_n
            * (-kp * resid * p.g / (self.h * self.h) + mp * (1.0 - k * p.g / self.h));
        (psi, dpsi)
    }
}
