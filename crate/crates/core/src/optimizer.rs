//! Empirical welfare maximization over sieve policy spaces.
//!
//! Objectives have the separable form J(theta) = sum_i psi_i(pi_theta(x_i)):
//! each data point contributes a smooth function of the policy's value at
//! its covariates. Kernel-weighted welfare, double-debiased welfare, and
//! signed Rademacher objectives are all instances. J is smooth (the flat-top
//! kernel is infinitely differentiable) but nonconcave, so we run projected
//! gradient ascent with pool-adjacent-violators projection onto the monotone
//! cone, Armijo backtracking, and a deterministic multi-start schedule.

use crate::error::OptimizerError;
use crate::kernel::FlatTopKernel;
use crate::num;
use crate::rng;
use crate::sieve::{MonotoneSeparableFamily, PolicyParams};
use rand::Rng;
use rayon::prelude::*;

/// Salt for per-start RNG streams.
const START_STREAM_SALT: u64 = 0x5ee_d5;
/// Armijo sufficient-increase fraction.
const ARMIJO_SIGMA: f64 = 1e-4;
/// Growth factor applied to the step after an accepted iteration.
const STEP_GROWTH: f64 = 1.5;
/// Maximum halvings inside one backtracking line search.
const MAX_BACKTRACKS: u32 = 48;
/// Resolution of the constant-policy scan that seeds start 0.
const CONSTANT_SCAN_POINTS: usize = 201;

/// A data point's contribution to a separable objective.
pub trait PointObjective: Sync {
    /// Number of points.
    fn n_points(&self) -> usize;
    /// Covariates of point `i` (already scaled to [0,1]^{d_X}).
    fn x(&self, i: usize) -> &[f64];
    /// Natural policy-value anchor of point `i` (its treatment level);
    /// used only to seed multi-start constants.
    fn anchor(&self, i: usize) -> f64;
    /// (psi_i(v), psi_i'(v)) at policy value `v`.
    fn eval(&self, i: usize, v: f64) -> (f64, f64);
}

/// One weighted sample point of a kernel objective.
#[derive(Debug, Clone)]
pub struct ObjectivePoint {
    /// Treatment level (kernel center).
    pub t: f64,
    /// Covariates scaled to [0,1]^{d_X}.
    pub x: Vec<f64>,
    /// Weight w_i (outcome times inverse propensity, signed Rademacher
    /// weight, or any other bounded multiplier).
    pub w: f64,
}

/// Kernel-weighted objective J(theta) = (1/(n h)) sum_i w_i K((t_i - pi_theta(x_i))/h).
#[derive(Debug, Clone)]
pub struct WeightedObjective {
    /// Sample points.
    pub points: Vec<ObjectivePoint>,
    /// Kernel bandwidth h > 0.
    pub h: f64,
    kernel: FlatTopKernel,
}

impl WeightedObjective {
    /// Validate and wrap the points and bandwidth.
    pub fn new(points: Vec<ObjectivePoint>, h: f64) -> Result<Self, OptimizerError> {
        if points.is_empty() {
            return Err(OptimizerError::EmptyObjective);
        }
        if !(h > 0.0) {
            return Err(OptimizerError::NonPositiveBandwidth(h));
        }
        Ok(Self {
            points,
            h,
            kernel: FlatTopKernel::default(),
        })
    }
}

impl PointObjective for WeightedObjective {
    fn n_points(&self) -> usize {
        self.points.len()
    }

    fn x(&self, i: usize) -> &[f64] {
        &self.points[i].x
    }

    fn anchor(&self, i: usize) -> f64 {
        self.points[i].t
    }

    #[inline]
    fn eval(&self, i: usize, v: f64) -> (f64, f64) {
        let p = &self.points[i];
        let scale = p.w / (self.points.len() as f64 * self.h);
        let u = (p.t - v) / self.h;
        // d/dv K((t - v)/h) = -K'((t - v)/h)/h.
        (
            scale * self.kernel.value(u),
            -scale * self.kernel.deriv(u) / self.h,
        )
    }
}

/// Optimization controls.
#[derive(Debug, Clone, Copy)]
pub struct OptimizerConfig {
    /// Number of starts tried (prefix-stable: start j is the same policy
    /// regardless of how many starts run).
    pub n_starts: usize,
    /// Iteration cap per start.
    pub max_iters: usize,
    /// Initial step size; `None` scales automatically from the first
    /// gradient and the output range.
    pub step_init: Option<f64>,
    /// Relative objective-change tolerance for convergence.
    pub tol: f64,
    /// Master seed for the start schedule.
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            n_starts: 16,
            max_iters: 400,
            step_init: None,
            tol: 1e-7,
            seed: 0,
        }
    }
}

/// Parameter space being searched.
#[derive(Debug, Clone, Copy)]
pub enum PolicySpace {
    /// The monotone separable sieve family.
    Monotone(MonotoneSeparableFamily),
    /// Constant policies pi(x) = c, c in [lo, hi].
    Constant {
        /// Lower bound of the constant.
        lo: f64,
        /// Upper bound of the constant.
        hi: f64,
    },
}

impl PolicySpace {
    fn out_bounds(&self) -> (f64, f64) {
        match self {
            PolicySpace::Monotone(f) => (f.out_lo, f.out_hi),
            PolicySpace::Constant { lo, hi } => (*lo, *hi),
        }
    }

    /// Feasible representation of the constant policy c.
    fn constant_theta(&self, c: f64) -> Vec<f64> {
        match self {
            PolicySpace::Monotone(f) => PolicyParams::constant(c, f).theta,
            PolicySpace::Constant { .. } => vec![c],
        }
    }

    /// Project onto the feasible set (monotone cone per coordinate block,
    /// or the interval for constants).
    fn project(&self, theta: &mut [f64]) {
        match self {
            PolicySpace::Monotone(f) => {
                let per = f.k + 1;
                for p in 0..f.d_x {
                    project_monotone_in_place(&mut theta[p * per..(p + 1) * per]);
                }
            }
            PolicySpace::Constant { lo, hi } => theta[0] = theta[0].clamp(*lo, *hi),
        }
    }
}

/// Euclidean projection of a vector onto the nondecreasing cone via
/// pool-adjacent-violators.
pub fn project_monotone(theta_p: &[f64]) -> Vec<f64> {
    let mut out = theta_p.to_vec();
    project_monotone_in_place(&mut out);
    out
}

/// In-place PAVA. Maintains a stack of blocks (start index, count, mean);
/// merging adjacent violating blocks preserves the least-squares optimum.
fn project_monotone_in_place(v: &mut [f64]) {
    if v.len() < 2 {
        return;
    }
    // (start, count, mean) per pooled block.
    let mut blocks: Vec<(usize, usize, f64)> = Vec::with_capacity(v.len());
    for (i, &val) in v.iter().enumerate() {
        blocks.push((i, 1, val));
        while blocks.len() >= 2 {
            let (_, n2, m2) = blocks[blocks.len() - 1];
            let (s1, n1, m1) = blocks[blocks.len() - 2];
            if m2 < m1 {
                let merged = (s1, n1 + n2, (m1 * n1 as f64 + m2 * n2 as f64) / (n1 + n2) as f64);
                blocks.pop();
                blocks.pop();
                blocks.push(merged);
            } else {
                break;
            }
        }
    }
    for &(start, count, mean) in &blocks {
        for slot in v[start..start + count].iter_mut() {
            *slot = mean;
        }
    }
}

/// Per-point policy evaluation plan: the active basis entries of every
/// point, precomputed once per (space, objective) pair.
struct Prepared {
    /// Flattened (theta index, weight) pairs; `width` entries per point.
    pairs: Vec<(u32, f64)>,
    width: usize,
    out_lo: f64,
    out_hi: f64,
}

impl Prepared {
    fn build(space: &PolicySpace, obj: &dyn PointObjective) -> Self {
        let n = obj.n_points();
        let (out_lo, out_hi) = space.out_bounds();
        match space {
            PolicySpace::Monotone(fam) => {
                let width = 2 * fam.d_x;
                let mut pairs = Vec::with_capacity(n * width);
                for i in 0..n {
                    for (idx, w) in fam.active_nodes(obj.x(i)) {
                        pairs.push((idx as u32, w));
                    }
                }
                Self { pairs, width, out_lo, out_hi }
            }
            PolicySpace::Constant { .. } => Self {
                pairs: (0..n).map(|_| (0u32, 1.0)).collect(),
                width: 1,
                out_lo,
                out_hi,
            },
        }
    }

    /// pi_theta at point i before the output clamp.
    #[inline]
    fn raw_value(&self, theta: &[f64], i: usize) -> f64 {
        let mut acc = 0.0;
        for &(idx, w) in &self.pairs[i * self.width..(i + 1) * self.width] {
            acc += theta[idx as usize] * w;
        }
        acc
    }

    /// J(theta); sequential accumulation in point order (deterministic).
    fn value(&self, obj: &dyn PointObjective, theta: &[f64]) -> f64 {
        let n = obj.n_points();
        let mut acc = 0.0;
        for i in 0..n {
            let v = self.raw_value(theta, i).clamp(self.out_lo, self.out_hi);
            acc += obj.eval(i, v).0;
        }
        acc
    }

    /// J and its gradient. Points whose raw policy value is clamped
    /// contribute zero gradient (the clamp is flat there).
    fn value_grad(&self, obj: &dyn PointObjective, theta: &[f64], grad: &mut [f64]) -> f64 {
        grad.fill(0.0);
        let n = obj.n_points();
        let mut acc = 0.0;
        for i in 0..n {
            let raw = self.raw_value(theta, i);
            let clamped = raw < self.out_lo || raw > self.out_hi;
            let v = raw.clamp(self.out_lo, self.out_hi);
            let (val, dval) = obj.eval(i, v);
            acc += val;
            if !clamped {
                for &(idx, w) in &self.pairs[i * self.width..(i + 1) * self.width] {
                    grad[idx as usize] += dval * w;
                }
            }
        }
        acc
    }
}

/// Deterministic candidate comparison: higher value wins; ties go to the
/// smaller l2 norm, then lexicographically smaller theta.
fn better(cand: &(f64, Vec<f64>), best: &(f64, Vec<f64>)) -> bool {
    if cand.0 != best.0 {
        return cand.0 > best.0;
    }
    let l2 = |v: &[f64]| num::pairwise_sum(&v.iter().map(|a| a * a).collect::<Vec<_>>());
    let (lc, lb) = (l2(&cand.1), l2(&best.1));
    if lc != lb {
        return lc < lb;
    }
    cand.1
        .iter()
        .zip(&best.1)
        .find(|(a, b)| a != b)
        .map(|(a, b)| a < b)
        .unwrap_or(false)
}

/// The deterministic start schedule. Start 0 is the best constant from a
/// dense scan of the output range; starts 1-9 are constants at the anchor
/// quantiles 0.1..0.9; further starts are random monotone draws (sorted
/// uniforms over the output range, seeded per start index).
fn start_theta(
    j: usize,
    space: &PolicySpace,
    obj: &dyn PointObjective,
    prep: &Prepared,
    cfg: &OptimizerConfig,
) -> Vec<f64> {
    let (lo, hi) = space.out_bounds();
    match j {
        0 => {
            let mut best = (f64::NEG_INFINITY, lo);
            for s in 0..CONSTANT_SCAN_POINTS {
                let c = lo + (hi - lo) * s as f64 / (CONSTANT_SCAN_POINTS - 1) as f64;
                let theta = space.constant_theta(c);
                let v = prep.value(obj, &theta);
                if v > best.0 {
                    best = (v, c);
                }
            }
            space.constant_theta(best.1)
        }
        1..=9 => {
            let anchors: Vec<f64> = (0..obj.n_points()).map(|i| obj.anchor(i)).collect();
            let c = num::quantile(&anchors, 0.1 * j as f64).clamp(lo, hi);
            space.constant_theta(c)
        }
        _ => {
            let mut rng = rng::stream(cfg.seed, &[START_STREAM_SALT, j as u64]);
            match space {
                PolicySpace::Monotone(fam) => {
                    let per = fam.k + 1;
                    let mut theta = vec![0.0; fam.dim()];
                    for p in 0..fam.d_x {
                        let mut draws: Vec<f64> = (0..per)
                            .map(|_| lo + (hi - lo) * rng.gen::<f64>())
                            .collect();
                        draws.sort_by(|a, b| a.partial_cmp(b).unwrap());
                        for (slot, d) in theta[p * per..(p + 1) * per].iter_mut().zip(draws) {
                            *slot = d / fam.d_x as f64;
                        }
                    }
                    theta
                }
                PolicySpace::Constant { .. } => vec![lo + (hi - lo) * rng.gen::<f64>()],
            }
        }
    }
}

/// Projected gradient ascent from one start.
fn ascend(
    theta0: Vec<f64>,
    space: &PolicySpace,
    obj: &dyn PointObjective,
    prep: &Prepared,
    cfg: &OptimizerConfig,
) -> (f64, Vec<f64>) {
    let dim = theta0.len();
    let mut theta = theta0;
    space.project(&mut theta);
    let mut grad = vec![0.0; dim];
    let mut value = prep.value_grad(obj, &theta, &mut grad);
    let (lo, hi) = space.out_bounds();
    let grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    let mut step = cfg.step_init.unwrap_or_else(|| {
        // Scale so the first trial moves a fraction of the output range.
        if grad_norm > 0.0 {
            0.25 * (hi - lo).max(1e-12) / grad_norm
        } else {
            1.0
        }
    });
    let mut flat_iters = 0u32;
    for _ in 0..cfg.max_iters {
        if !grad.iter().any(|&g| g != 0.0) {
            break;
        }
        let mut accepted = false;
        for _ in 0..MAX_BACKTRACKS {
            let mut trial: Vec<f64> =
                theta.iter().zip(&grad).map(|(t, g)| t + step * g).collect();
            space.project(&mut trial);
            let ascent: f64 = trial
                .iter()
                .zip(&theta)
                .zip(&grad)
                .map(|((t1, t0), g)| (t1 - t0) * g)
                .sum();
            if ascent <= 0.0 {
                // Projection blocks the gradient direction: stationary.
                break;
            }
            let trial_value = prep.value(obj, &trial);
            if trial_value >= value + ARMIJO_SIGMA * ascent {
                let rel_change = (trial_value - value).abs() / value.abs().max(1e-12);
                theta = trial;
                value = prep.value_grad(obj, &theta, &mut grad);
                step *= STEP_GROWTH;
                accepted = true;
                if rel_change <= cfg.tol {
                    flat_iters += 1;
                } else {
                    flat_iters = 0;
                }
                break;
            }
            step *= 0.5;
        }
        if !accepted || flat_iters >= 2 {
            break;
        }
    }
    (value, theta)
}

/// Maximize a separable objective over a policy space.
///
/// Deterministic given `cfg.seed`: starts run in parallel but are reduced
/// in start order with a total tie-break, so thread count never changes
/// the result.
pub fn maximize_space(
    obj: &dyn PointObjective,
    space: &PolicySpace,
    cfg: &OptimizerConfig,
) -> Result<(Vec<f64>, f64), OptimizerError> {
    if obj.n_points() == 0 {
        return Err(OptimizerError::EmptyObjective);
    }
    assert!(cfg.n_starts >= 1, "n_starts must be >= 1");
    let prep = Prepared::build(space, obj);
    let candidates: Vec<(f64, Vec<f64>)> = (0..cfg.n_starts)
        .into_par_iter()
        .map(|j| {
            let theta0 = start_theta(j, space, obj, &prep, cfg);
            ascend(theta0, space, obj, &prep, cfg)
        })
        .collect();
    let mut best = candidates[0].clone();
    for cand in &candidates[1..] {
        if better(cand, &best) {
            best = cand.clone();
        }
    }
    let (value, theta) = best;
    if !value.is_finite() {
        return Err(OptimizerError::EmptyObjective);
    }
    Ok((theta, value))
}

/// Maximize a kernel-weighted objective over the monotone sieve family
/// (empirical welfare maximization).
pub fn maximize(
    obj: &WeightedObjective,
    fam: &MonotoneSeparableFamily,
    cfg: &OptimizerConfig,
) -> Result<(PolicyParams, f64), OptimizerError> {
    if obj.points.is_empty() {
        return Err(OptimizerError::EmptyObjective);
    }
    if !(obj.h > 0.0) {
        return Err(OptimizerError::NonPositiveBandwidth(obj.h));
    }
    if obj.points[0].x.len() != fam.d_x {
        return Err(OptimizerError::DimensionMismatch {
            family: fam.d_x,
            objective: obj.points[0].x.len(),
        });
    }
    let (theta, value) = maximize_space(obj, &PolicySpace::Monotone(*fam), cfg)?;
    Ok((PolicyParams { theta }, value))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::KAPPA_BAR;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;

    fn pt(t: f64, x: f64, w: f64) -> ObjectivePoint {
        ObjectivePoint { t, x: vec![x], w }
    }

    #[test]
    fn pava_examples() {
        assert_eq!(project_monotone(&[1.0, 2.0, 3.0]), vec![1.0, 2.0, 3.0]);
        assert_eq!(project_monotone(&[3.0, 1.0]), vec![2.0, 2.0]);
        assert_eq!(project_monotone(&[5.0, 5.0, 5.0]), vec![5.0, 5.0, 5.0]);
        assert_eq!(
            project_monotone(&[1.0, 3.0, 2.0, 4.0]),
            vec![1.0, 2.5, 2.5, 4.0]
        );
    }

    #[test]
    fn pava_matches_grid_minimization_oracle() {
        // Oracle: minimize ||(3,1) - v||^2 over v1 <= v2 on a dense grid.
        let mut best = (f64::INFINITY, 0.0, 0.0);
        for i in 0..=400 {
            for j in i..=400 {
                let (v1, v2) = (i as f64 * 0.01, j as f64 * 0.01);
                let d = (3.0 - v1).powi(2) + (1.0 - v2).powi(2);
                if d < best.0 {
                    best = (d, v1, v2);
                }
            }
        }
        assert_relative_eq!(best.1, 2.0, epsilon = 1e-9);
        assert_relative_eq!(best.2, 2.0, epsilon = 1e-9);
    }

    #[test]
    fn single_point_objective_attains_kernel_peak() {
        let h = 0.5;
        let obj = WeightedObjective::new(vec![pt(2.0, 0.5, 1.0)], h).unwrap();
        let fam = MonotoneSeparableFamily::new(1, 1, 0.0, 4.0);
        let cfg = OptimizerConfig { seed: 3, ..Default::default() };
        let (params, value) = maximize(&obj, &fam, &cfg).unwrap();
        // Optimum parks the policy on t = 2 with value K(0)/h = 3/(2 pi h).
        assert_relative_eq!(value, KAPPA_BAR / h, epsilon = 1e-9);
        assert_relative_eq!(value, 6.0 / std::f64::consts::PI / 2.0, epsilon = 1e-9);
        let v = crate::sieve::eval_policy(&fam, &params, &[0.5]).unwrap();
        assert_relative_eq!(v, 2.0, epsilon = 1e-5);
    }

    #[test]
    fn zero_weights_give_zero_value() {
        let obj =
            WeightedObjective::new(vec![pt(1.0, 0.2, 0.0), pt(3.0, 0.8, 0.0)], 0.3).unwrap();
        let fam = MonotoneSeparableFamily::new(1, 2, 0.0, 4.0);
        let (params, value) = maximize(&obj, &fam, &OptimizerConfig::default()).unwrap();
        assert_eq!(value, 0.0);
        assert!(params.in_monotone_cone(&fam, 1e-9));
    }

    #[test]
    fn two_far_points_constant_space_matches_grid_oracle() {
        let h = 0.1;
        let points = vec![pt(1.0, 0.3, 1.0), pt(5.0, 0.7, 1.0)];
        let obj = WeightedObjective::new(points, h).unwrap();
        let space = PolicySpace::Constant { lo: 0.0, hi: 6.0 };
        let cfg = OptimizerConfig { seed: 11, ..Default::default() };
        let (_, value) = maximize_space(&obj, &space, &cfg).unwrap();
        // Oracle: 1e5-point grid search over constants.
        let mut oracle = f64::NEG_INFINITY;
        for s in 0..=100_000 {
            let c = 6.0 * s as f64 / 100_000.0;
            let v = (0..2).map(|i| obj.eval(i, c).0).sum::<f64>();
            oracle = oracle.max(v);
        }
        assert!((value - oracle).abs() <= 1e-4 * oracle.abs().max(1.0));
        // Sitting on one point: J ~ K(0)/(2h), the other kernel is ~0.
        assert_relative_eq!(value, KAPPA_BAR / (2.0 * h), epsilon = 1e-3);
    }

    #[test]
    fn constant_space_small_instances_match_grid_oracle() {
        // n <= 5 points, mixed signs; returned value within 1e-4 of a
        // 1e5-point oracle.
        let cases: Vec<Vec<ObjectivePoint>> = vec![
            vec![pt(0.5, 0.1, 1.0)],
            vec![pt(0.2, 0.1, 1.0), pt(0.9, 0.9, -0.5), pt(0.55, 0.4, 2.0)],
            vec![
                pt(0.1, 0.0, 1.0),
                pt(0.3, 0.2, 1.0),
                pt(0.5, 0.5, -2.0),
                pt(0.7, 0.7, 1.0),
                pt(0.9, 1.0, 1.0),
            ],
        ];
        for (case_idx, points) in cases.into_iter().enumerate() {
            let n = points.len();
            let obj = WeightedObjective::new(points, 0.2).unwrap();
            let space = PolicySpace::Constant { lo: 0.0, hi: 1.0 };
            let cfg = OptimizerConfig { seed: 7, ..Default::default() };
            let (_, value) = maximize_space(&obj, &space, &cfg).unwrap();
            let mut oracle = f64::NEG_INFINITY;
            for s in 0..=100_000 {
                let c = s as f64 / 100_000.0;
                let v = (0..n).map(|i| obj.eval(i, c).0).sum::<f64>();
                oracle = oracle.max(v);
            }
            assert!(
                (value - oracle).abs() <= 1e-4 * oracle.abs().max(1.0),
                "case {case_idx}: {value} vs oracle {oracle}"
            );
        }
    }

    #[test]
    fn analytic_gradient_matches_central_differences() {
        let mut rng = rng::stream(99, &[1]);
        let fam = MonotoneSeparableFamily::new(2, 3, -50.0, 50.0);
        let points: Vec<ObjectivePoint> = (0..8)
            .map(|_| ObjectivePoint {
                t: rng.gen::<f64>() * 2.0,
                x: vec![rng.gen(), rng.gen()],
                w: rng.gen::<f64>() * 2.0 - 0.5,
            })
            .collect();
        let obj = WeightedObjective::new(points, 0.4).unwrap();
        let space = PolicySpace::Monotone(fam);
        let prep = Prepared::build(&space, &obj);
        for trial in 0..20 {
            let mut theta: Vec<f64> = (0..fam.dim())
                .map(|_| rng.gen::<f64>() * 2.0)
                .collect();
            // Feasible interior theta: sorted blocks, far from the clamp.
            let per = fam.k + 1;
            for p in 0..fam.d_x {
                theta[p * per..(p + 1) * per]
                    .sort_by(|a, b| a.partial_cmp(b).unwrap());
            }
            let mut grad = vec![0.0; fam.dim()];
            prep.value_grad(&obj, &theta, &mut grad);
            let mut fd = vec![0.0; fam.dim()];
            let eps = 1e-6;
            for d in 0..fam.dim() {
                let mut up = theta.clone();
                up[d] += eps;
                let mut dn = theta.clone();
                dn[d] -= eps;
                fd[d] = (prep.value(&obj, &up) - prep.value(&obj, &dn)) / (2.0 * eps);
            }
            let num_g = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            let diff = grad
                .iter()
                .zip(&fd)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            assert!(
                diff <= 1e-5 * num_g.max(1e-9),
                "trial {trial}: grad error {diff:e} vs norm {num_g:e}"
            );
        }
    }

    #[test]
    fn multi_start_is_monotone_in_start_count() {
        let mut rng = rng::stream(5, &[2]);
        let points: Vec<ObjectivePoint> = (0..40)
            .map(|_| ObjectivePoint {
                t: rng.gen::<f64>() * 3.0,
                x: vec![rng.gen()],
                w: rng.gen::<f64>() * 4.0 - 1.0,
            })
            .collect();
        let obj = WeightedObjective::new(points, 0.15).unwrap();
        let fam = MonotoneSeparableFamily::new(1, 4, 0.0, 3.0);
        let mut prev = f64::NEG_INFINITY;
        for n_starts in [1usize, 4, 16, 32] {
            let cfg = OptimizerConfig { n_starts, seed: 123, ..Default::default() };
            let (_, value) = maximize(&obj, &fam, &cfg).unwrap();
            assert!(
                value >= prev - 1e-12,
                "n_starts={n_starts}: {value} < {prev}"
            );
            prev = value;
        }
    }

    #[test]
    fn empty_objective_and_bad_bandwidth_are_rejected() {
        assert!(matches!(
            WeightedObjective::new(vec![], 0.5),
            Err(OptimizerError::EmptyObjective)
        ));
        assert!(matches!(
            WeightedObjective::new(vec![pt(0.0, 0.0, 1.0)], 0.0),
            Err(OptimizerError::NonPositiveBandwidth(_))
        ));
        assert!(matches!(
            WeightedObjective::new(vec![pt(0.0, 0.0, 1.0)], -1.0),
            Err(OptimizerError::NonPositiveBandwidth(_))
        ));
    }

    #[test]
    fn returned_theta_is_always_in_cone() {
        for seed in 0..6u64 {
            let mut rng = rng::stream(seed, &[3]);
            let points: Vec<ObjectivePoint> = (0..25)
                .map(|_| ObjectivePoint {
                    t: rng.gen::<f64>(),
                    x: vec![rng.gen(), rng.gen(), rng.gen()],
                    w: rng.gen::<f64>() * 2.0 - 1.0,
                })
                .collect();
            let obj = WeightedObjective::new(points, 0.2).unwrap();
            let fam = MonotoneSeparableFamily::new(3, 2, 0.0, 1.0);
            let cfg = OptimizerConfig { seed, n_starts: 8, ..Default::default() };
            let (params, _) = maximize(&obj, &fam, &cfg).unwrap();
            assert!(params.in_monotone_cone(&fam, 1e-9));
        }
    }

    #[test]
    fn determinism_across_repeated_calls() {
        let mut rng = rng::stream(17, &[4]);
        let points: Vec<ObjectivePoint> = (0..30)
            .map(|_| ObjectivePoint {
                t: rng.gen::<f64>() * 2.0,
                x: vec![rng.gen()],
                w: rng.gen::<f64>() - 0.3,
            })
            .collect();
        let obj = WeightedObjective::new(points, 0.25).unwrap();
        let fam = MonotoneSeparableFamily::new(1, 3, 0.0, 2.0);
        let cfg = OptimizerConfig { seed: 42, ..Default::default() };
        let (p1, v1) = maximize(&obj, &fam, &cfg).unwrap();
        let (p2, v2) = maximize(&obj, &fam, &cfg).unwrap();
        assert_eq!(v1.to_bits(), v2.to_bits());
        assert_eq!(p1.theta, p2.theta);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn pava_output_is_monotone_and_idempotent(
            v in proptest::collection::vec(-10.0f64..10.0, 1..12)
        ) {
            let p = project_monotone(&v);
            prop_assert!(p.windows(2).all(|w| w[1] >= w[0] - 1e-12));
            let pp = project_monotone(&p);
            for (a, b) in p.iter().zip(&pp) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
            // Mean preservation: pooled means preserve the total.
            let sum_in: f64 = v.iter().sum();
            let sum_out: f64 = p.iter().sum();
            prop_assert!((sum_in - sum_out).abs() <= 1e-9);
        }

        #[test]
        fn pava_is_the_nearest_feasible_point(
            v in proptest::collection::vec(-5.0f64..5.0, 2..8),
            z in proptest::collection::vec(-5.0f64..5.0, 2..8),
        ) {
            prop_assume!(v.len() == z.len());
            let p = project_monotone(&v);
            let mut zz = z.clone();
            zz.sort_by(|a, b| a.partial_cmp(b).unwrap());
            // Any feasible z is no closer to v than the projection.
            let d = |a: &[f64], b: &[f64]| -> f64 {
                a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
            };
            prop_assert!(d(&v, &p) <= d(&v, &zz) + 1e-9);
        }
    }
}
