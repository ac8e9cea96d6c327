//! Synthetic data-generating processes with known ground truth.
//!
//! Each catalog DGP fixes an outcome surface m(t, x), a treatment density
//! f(t|x) bounded away from zero on a known support, and the analytic
//! smoothness certificate (r, V) for the smoothing-bias bound. The harness
//! can draw samples, evaluate exact and kernel-smoothed population welfare
//! by quadrature, locate the oracle policy value, and run end-to-end regret
//! experiments over the data-driven (h, k) selector.

use crate::biasbound::{fit_envelope, BiasBoundFit, MuFtCurve, DEFAULT_GAMMA};
use crate::data::{Dataset, Observation, PropensityOracle};
use crate::error::SimError;
use crate::kernel::FlatTopKernel;
use crate::num::{adaptive_simpson, gauss_legendre, normal_cdf, pairwise_sum};
use crate::optimizer::{maximize_space, OptimizerConfig, PointObjective, PolicySpace};
use crate::rng::{mix, stream};
use crate::selection::{
    make_grid, select, EstimatorSpec, GridKind, PenaltyKind, SelectionConfig,
};
use crate::sieve::{eval_policy, MonotoneSeparableFamily, PolicyParams};
use crate::welfare::EstimatorKind;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Stream salt for sample generation.
const GEN_SALT: u64 = 0x6765_6e64;
/// Stream salt for per-replication seeds.
const REP_SALT: u64 = 0x7265_7073;
/// Stream salt for the Monte Carlo welfare fallback.
const MC_SALT: u64 = 0x6d63_7731;
/// Seed salt for the oracle-policy search.
const ORACLE_SALT: u64 = 0x6f72_6163;
/// Outcome noise is truncated at this many standard deviations.
pub const NOISE_TRUNC_Z: f64 = 4.0;
/// Nodes per Gauss-Legendre panel in the tensor quadrature.
const GL_NODES_PER_PANEL: usize = 16;
/// Kernel evaluations are windowed to |u| <= this in smoothed welfare;
/// the flat-top tail mass beyond is below 3/(pi U^2) ~ 2.4e-7.
const SMOOTH_WINDOW: f64 = 2000.0;
/// Absolute tolerance of the inner smoothed-welfare integral.
const SMOOTH_TOL: f64 = 1e-9;
/// Monte Carlo draws for the high-dimension welfare fallback.
const MC_DRAWS: usize = 1_000_000;
/// Sieve dimension of the oracle-policy search.
const ORACLE_SIEVE_K: usize = 32;

/// Outcome surface catalog.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MForm {
    /// m(t, x) = t on t in [0, 1].
    Linear,
    /// m(t, x) = peak * max(0, 1 - |t - 2|/2) on t in [0, 4]: a tent with
    /// half-width 2 centered at 2, vanishing at the support edges.
    Tent { peak: f64 },
    /// m(t, x) = (a + b xbar) * t (1 - t) on t in [0, 1], xbar the mean
    /// covariate; smooth in t with covariate-dependent amplitude.
    SmoothQuadratic { a: f64, b: f64 },
    /// m(t, x) = peak * max(0, 1 - |t - theta*(x)|) with
    /// theta*(x) = 1 + 2 xbar: a sliding tent whose optimal policy is
    /// separable and increasing in every covariate.
    SeparableMonotone { peak: f64 },
}

/// Treatment assignment catalog.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FForm {
    /// T | X uniform on the treatment support.
    Uniform,
    /// T | X normal with x-dependent mean, truncated to the support.
    /// The mean slides from 25% to 75% of the support as xbar goes 0 to 1.
    TruncatedNormal { sd: f64 },
}

/// A fully specified data-generating process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    /// Outcome surface.
    pub m_form: MForm,
    /// Treatment assignment mechanism.
    pub f_form: FForm,
    /// Outcome noise standard deviation (>= 0).
    pub noise_sd: f64,
    /// Covariate dimension; X is uniform on [0,1]^{d_x}.
    pub d_x: usize,
    /// Analytic smoothness order of the outcome's Fourier envelope.
    pub known_r: u32,
    /// Analytic envelope constant: |m^FT(xi)| <= known_v |xi|^-(known_r+1)
    /// per covariate value (certified on the working bandwidth range).
    pub known_v: f64,
}

impl DgpSpec {
    /// Linear outcome m = t with uniform treatment on [0, 1].
    ///
    /// The zero-extension of m has jumps at the support edges, so no exact
    /// global envelope exists; (r, V) = (1, 4) is a finite-range
    /// certificate checked by quadrature on the working bandwidth grid.
    pub fn linear(d_x: usize, noise_sd: f64) -> Self {
        Self::validate(Self {
            m_form: MForm::Linear,
            f_form: FForm::Uniform,
            noise_sd,
            d_x,
            known_r: 1,
            known_v: 4.0,
        })
    }

    /// Tent outcome on [0, 4]; exact envelope V = 2 peak at r = 1
    /// (tight: the tent transform is peak * 2 sinc^2(xi), bounded by
    /// 2 peak / xi^2 with equality approached at xi = pi/2 + k pi).
    pub fn tent(peak: f64, d_x: usize, noise_sd: f64) -> Self {
        assert!(peak > 0.0 && peak.is_finite(), "tent peak must be positive");
        Self::validate(Self {
            m_form: MForm::Tent { peak },
            f_form: FForm::Uniform,
            noise_sd,
            d_x,
            known_r: 1,
            known_v: 2.0 * peak,
        })
    }

    /// Smooth quadratic outcome (a + b xbar) t (1 - t) on [0, 1].
    ///
    /// The zero-extension has edge kinks, so the envelope order is r = 1;
    /// sup_xi xi^2 |FT(t(1-t))| = 2.1263 (attained near xi = 5.49), so
    /// V = 2.2 (a + b) covers every covariate value with margin.
    pub fn smooth_quadratic(a: f64, b: f64, d_x: usize, noise_sd: f64) -> Self {
        assert!(a > 0.0 && a.is_finite(), "amplitude intercept must be positive");
        assert!(b >= 0.0 && b.is_finite(), "amplitude slope must be nonnegative");
        Self::validate(Self {
            m_form: MForm::SmoothQuadratic { a, b },
            f_form: FForm::Uniform,
            noise_sd,
            d_x,
            known_r: 1,
            known_v: 2.2 * (a + b),
        })
    }

    /// Sliding tent with separable monotone optimal policy
    /// theta*(x) = 1 + 2 xbar on [0, 4]; half-width 1 keeps the tent
    /// inside the support for every x, so the exact envelope is
    /// V = 4 peak at r = 1.
    pub fn separable_monotone(peak: f64, d_x: usize, noise_sd: f64) -> Self {
        assert!(peak > 0.0 && peak.is_finite(), "tent peak must be positive");
        Self::validate(Self {
            m_form: MForm::SeparableMonotone { peak },
            f_form: FForm::Uniform,
            noise_sd,
            d_x,
            known_r: 1,
            known_v: 4.0 * peak,
        })
    }

    /// Swap the treatment mechanism (builder style).
    pub fn with_treatment(mut self, f_form: FForm) -> Self {
        if let FForm::TruncatedNormal { sd } = f_form {
            assert!(sd > 0.0 && sd.is_finite(), "treatment sd must be positive");
        }
        self.f_form = f_form;
        self
    }

    fn validate(spec: Self) -> Self {
        assert!(spec.d_x >= 1, "d_x must be >= 1");
        assert!(
            spec.noise_sd >= 0.0 && spec.noise_sd.is_finite(),
            "noise_sd must be nonnegative"
        );
        spec
    }

    /// Treatment support [t_lo, t_hi].
    pub fn t_range(&self) -> (f64, f64) {
        match self.m_form {
            MForm::Linear | MForm::SmoothQuadratic { .. } => (0.0, 1.0),
            MForm::Tent { .. } | MForm::SeparableMonotone { .. } => (0.0, 4.0),
        }
    }

    /// Outcome surface m(t, x).
    pub fn m(&self, t: f64, x: &[f64]) -> f64 {
        match &self.m_form {
            MForm::Linear => {
                if (0.0..=1.0).contains(&t) {
                    t
                } else {
                    0.0
                }
            }
            MForm::Tent { peak } => peak * (1.0 - (t - 2.0).abs() / 2.0).max(0.0),
            MForm::SmoothQuadratic { a, b } => {
                if (0.0..=1.0).contains(&t) {
                    (a + b * xbar(x)) * t * (1.0 - t)
                } else {
                    0.0
                }
            }
            MForm::SeparableMonotone { peak } => {
                let theta = 1.0 + 2.0 * xbar(x);
                peak * (1.0 - (t - theta).abs()).max(0.0)
            }
        }
    }

    /// Subgradient of m in t (0 at kinks and outside the support).
    pub fn m_deriv_t(&self, t: f64, x: &[f64]) -> f64 {
        match &self.m_form {
            MForm::Linear => {
                if (0.0..=1.0).contains(&t) {
                    1.0
                } else {
                    0.0
                }
            }
            MForm::Tent { peak } => {
                let s = t - 2.0;
                if s.abs() >= 2.0 || s == 0.0 {
                    0.0
                } else {
                    -peak * s.signum() / 2.0
                }
            }
            MForm::SmoothQuadratic { a, b } => {
                if (0.0..=1.0).contains(&t) {
                    (a + b * xbar(x)) * (1.0 - 2.0 * t)
                } else {
                    0.0
                }
            }
            MForm::SeparableMonotone { peak } => {
                let s = t - (1.0 + 2.0 * xbar(x));
                if s.abs() >= 1.0 || s == 0.0 {
                    0.0
                } else {
                    -peak * s.signum()
                }
            }
        }
    }

    /// Conditional treatment density f(t | x) on the support.
    pub fn density(&self, t: f64, x: &[f64]) -> f64 {
        let (lo, hi) = self.t_range();
        if t < lo || t > hi {
            return 0.0;
        }
        match self.f_form {
            FForm::Uniform => 1.0 / (hi - lo),
            FForm::TruncatedNormal { sd } => {
                let mu = self.trunc_mean(xbar(x));
                let z_mass = normal_cdf((hi - mu) / sd) - normal_cdf((lo - mu) / sd);
                let u = (t - mu) / sd;
                (-0.5 * u * u).exp() / ((2.0 * std::f64::consts::PI).sqrt() * sd * z_mass)
            }
        }
    }

    fn trunc_mean(&self, xb: f64) -> f64 {
        let (lo, hi) = self.t_range();
        lo + (hi - lo) * (0.25 + 0.5 * xb)
    }

    /// Analytic inverse-propensity oracle for this DGP.
    pub fn propensity_oracle(&self) -> PropensityOracle {
        let (lo, hi) = self.t_range();
        match self.f_form {
            FForm::Uniform => PropensityOracle::constant_density(1.0 / (hi - lo)),
            FForm::TruncatedNormal { .. } => {
                // The density is unimodal in t and its edge value is
                // monotone in the mean, so the infimum over (t, x) sits at
                // a support edge under the most distant mean.
                let spec = self.clone();
                let f_lower = {
                    let far = spec.density(lo, &vec![1.0; spec.d_x]);
                    let near = spec.density(hi, &vec![0.0; spec.d_x]);
                    far.min(near)
                };
                PropensityOracle::new(
                    f_lower,
                    Arc::new(move |t, x| 1.0 / spec.density(t, x)),
                )
            }
        }
    }

    /// Closed-form maximal welfare over unrestricted policies, where one
    /// exists: linear -> 1, tent -> peak, smooth quadratic -> mean
    /// amplitude / 4, separable monotone -> peak.
    pub fn closed_form_optimum(&self) -> Option<f64> {
        match &self.m_form {
            MForm::Linear => Some(1.0),
            MForm::Tent { peak } => Some(*peak),
            MForm::SmoothQuadratic { a, b } => Some((a + b / 2.0) / 4.0),
            MForm::SeparableMonotone { peak } => Some(*peak),
        }
    }
}

fn xbar(x: &[f64]) -> f64 {
    pairwise_sum(x) / x.len() as f64
}

/// Draw a standard normal via Box-Muller (one fresh uniform pair each).
fn draw_normal<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.gen();
    let u2: f64 = rng.gen();
    (-2.0 * (1.0 - u1).ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Draw an observational sample of size `n` from the DGP.
///
/// Per observation: X uniform on the unit box, T | X from the treatment
/// mechanism (rejection sampling for the truncated normal), and
/// Y = m(T, X) + noise with the Gaussian noise truncated at
/// +/- [`NOISE_TRUNC_Z`] standard deviations (no draw when noise_sd = 0,
/// so noiseless outcomes are bitwise m(T, X)). Deterministic given
/// (spec, n, seed); also returns the analytic propensity oracle.
pub fn generate(spec: &DgpSpec, n: usize, seed: u64) -> (Dataset, PropensityOracle) {
    assert!(n >= 2, "need at least two observations");
    let mut rng = stream(seed, &[GEN_SALT]);
    let (lo, hi) = spec.t_range();
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        let x: Vec<f64> = (0..spec.d_x).map(|_| rng.gen::<f64>()).collect();
        let t = match spec.f_form {
            FForm::Uniform => lo + (hi - lo) * rng.gen::<f64>(),
            FForm::TruncatedNormal { sd } => {
                let mu = spec.trunc_mean(xbar(&x));
                loop {
                    let cand = mu + sd * draw_normal(&mut rng);
                    if (lo..=hi).contains(&cand) {
                        break cand;
                    }
                }
            }
        };
        let y = if spec.noise_sd == 0.0 {
            spec.m(t, &x)
        } else {
            let z = loop {
                let z = draw_normal(&mut rng);
                if z.abs() <= NOISE_TRUNC_Z {
                    break z;
                }
            };
            spec.m(t, &x) + spec.noise_sd * z
        };
        rows.push(Observation { y, t, x });
    }
    let ds = Dataset::from_rows(rows).expect("generated rows are finite and consistent");
    (ds, spec.propensity_oracle())
}

/// Composite Gauss-Legendre nodes and weights on [0, 1]: `panels` equal
/// panels with [`GL_NODES_PER_PANEL`] nodes each.
fn composite_gl(panels: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = Vec::with_capacity(panels * GL_NODES_PER_PANEL);
    let mut weights = Vec::with_capacity(panels * GL_NODES_PER_PANEL);
    for j in 0..panels {
        let a = j as f64 / panels as f64;
        let b = (j + 1) as f64 / panels as f64;
        let (xs, ws) = gauss_legendre(GL_NODES_PER_PANEL, a, b);
        nodes.extend(xs);
        weights.extend(ws);
    }
    (nodes, weights)
}

/// Panels per axis: denser in low dimension where a single axis carries
/// all the kink mass; >= 64 nodes per axis in every case.
fn panels_for(d: usize) -> usize {
    match d {
        1 | 2 => 64,
        _ => 8,
    }
}

/// Tensor-product quadrature of `f` over [0,1]^d, d <= 3.
///
/// Composite Gauss-Legendre per axis. Smooth integrands are resolved to
/// near machine precision; the catalog's kink surfaces to ~1e-7 for
/// d <= 2 and ~1e-5 for d = 3 (where the panel count is capped to keep
/// the tensor affordable). Deterministic: the outer axis is parallel
/// with ordered collection and the final reduction is pairwise.
fn tensor_quadrature(d: usize, f: &(dyn Fn(&[f64]) -> f64 + Sync)) -> f64 {
    assert!((1..=3).contains(&d), "tensor quadrature supports d <= 3");
    let (nodes, weights) = composite_gl(panels_for(d));
    let per_axis = nodes.len();
    let outer: Vec<f64> = (0..per_axis)
        .into_par_iter()
        .map(|i0| {
            let mut x = vec![0.0; d];
            x[0] = nodes[i0];
            if d == 1 {
                return weights[i0] * f(&x);
            }
            let mut terms = Vec::with_capacity(per_axis.pow(d as u32 - 1));
            let mut idx = vec![0usize; d - 1];
            loop {
                let mut w = weights[i0];
                for (j, &ij) in idx.iter().enumerate() {
                    x[j + 1] = nodes[ij];
                    w *= weights[ij];
                }
                terms.push(w * f(&x));
                // Odometer advance over the inner indices.
                let mut j = 0;
                loop {
                    idx[j] += 1;
                    if idx[j] < per_axis {
                        break;
                    }
                    idx[j] = 0;
                    j += 1;
                    if j == d - 1 {
                        return pairwise_sum(&terms);
                    }
                }
            }
        })
        .collect();
    pairwise_sum(&outer)
}

/// Exact population welfare of `policy` under an arbitrary outcome
/// surface: W = integral of m(policy(x), x) over x in [0,1]^d.
///
/// Tensor quadrature for d <= 3; errors with `DimensionTooLarge` above.
pub fn true_welfare_of(
    m: &(dyn Fn(f64, &[f64]) -> f64 + Sync),
    d_x: usize,
    policy: &(dyn Fn(&[f64]) -> f64 + Sync),
) -> Result<f64, SimError> {
    if !(1..=3).contains(&d_x) {
        return Err(SimError::DimensionTooLarge(d_x));
    }
    Ok(tensor_quadrature(d_x, &|x: &[f64]| m(policy(x), x)))
}

/// Monte Carlo population welfare: mean and standard error over `draws`
/// uniform covariate draws. Deterministic given `seed`.
pub fn true_welfare_mc(
    spec: &DgpSpec,
    policy: &(dyn Fn(&[f64]) -> f64 + Sync),
    draws: usize,
    seed: u64,
) -> (f64, f64) {
    assert!(draws >= 2, "need at least two Monte Carlo draws");
    let mut rng = stream(seed, &[MC_SALT]);
    let mut vals = Vec::with_capacity(draws);
    let mut x = vec![0.0; spec.d_x];
    for _ in 0..draws {
        for xi in x.iter_mut() {
            *xi = rng.gen::<f64>();
        }
        vals.push(spec.m(policy(&x), &x));
    }
    let mean = pairwise_sum(&vals) / draws as f64;
    let var = pairwise_sum(&vals.iter().map(|v| (v - mean) * (v - mean)).collect::<Vec<_>>())
        / (draws as f64 - 1.0);
    (mean, (var / draws as f64).sqrt())
}

/// Exact population welfare of `policy` under the DGP.
///
/// Tensor quadrature for d_x <= 3 (absolute accuracy ~1e-6 even across
/// the catalog's kinks); larger dimensions fall back to a seeded
/// 10^6-draw Monte Carlo average.
pub fn true_welfare(
    spec: &DgpSpec,
    policy: &(dyn Fn(&[f64]) -> f64 + Sync),
) -> Result<f64, SimError> {
    if spec.d_x <= 3 {
        true_welfare_of(&|t, x| spec.m(t, x), spec.d_x, policy)
    } else {
        Ok(true_welfare_mc(spec, policy, MC_DRAWS, mix(0, &[MC_SALT, spec.d_x as u64])).0)
    }
}

/// Kernel-smoothed value at a single covariate point: the t-integral of
/// (1/h) K((t - v)/h) m(t) over the treatment support, windowed to
/// |u| <= [`SMOOTH_WINDOW`] where the kernel tail is negligible.
pub fn smoothed_value(
    m_t: &dyn Fn(f64) -> f64,
    support: (f64, f64),
    v: f64,
    h: f64,
) -> f64 {
    assert!(h > 0.0 && h.is_finite(), "bandwidth must be positive");
    let kernel = FlatTopKernel::default();
    let a = support.0.max(v - SMOOTH_WINDOW * h);
    let b = support.1.min(v + SMOOTH_WINDOW * h);
    if a >= b {
        return 0.0;
    }
    adaptive_simpson(&|t: f64| kernel.value((t - v) / h) * m_t(t), a, b, SMOOTH_TOL) / h
}

/// Kernel-smoothed population welfare W_h of `policy` under an arbitrary
/// outcome surface on the given treatment support: the x-integral of
/// [`smoothed_value`] at v = policy(x). The treatment density cancels
/// against the inverse-propensity weight, so it does not appear.
pub fn smoothed_welfare_of(
    m: &(dyn Fn(f64, &[f64]) -> f64 + Sync),
    support: (f64, f64),
    d_x: usize,
    policy: &(dyn Fn(&[f64]) -> f64 + Sync),
    h: f64,
) -> Result<f64, SimError> {
    if !(1..=3).contains(&d_x) {
        return Err(SimError::DimensionTooLarge(d_x));
    }
    Ok(tensor_quadrature(d_x, &|x: &[f64]| {
        smoothed_value(&|t| m(t, x), support, policy(x), h)
    }))
}

/// Kernel-smoothed population welfare of `policy` under the DGP.
pub fn smoothed_welfare(
    spec: &DgpSpec,
    policy: &(dyn Fn(&[f64]) -> f64 + Sync),
    h: f64,
) -> Result<f64, SimError> {
    smoothed_welfare_of(
        &|t, x| spec.m(t, x),
        spec.t_range(),
        spec.d_x,
        policy,
        h,
    )
}

/// The true-welfare integral as a separable point objective: quadrature
/// nodes play the role of data points, with psi_i(v) = w_i m(v, x_i).
struct QuadratureObjective<'a> {
    spec: &'a DgpSpec,
    nodes: Vec<Vec<f64>>,
    weights: Vec<f64>,
    anchors: Vec<f64>,
}

impl<'a> QuadratureObjective<'a> {
    fn new(spec: &'a DgpSpec) -> Self {
        let d = spec.d_x;
        // A lighter grid than true_welfare's: the optimizer only needs the
        // argmax; the winner is re-scored by full quadrature afterwards.
        let panels = match d {
            1 => 16,
            2 => 8,
            _ => 4,
        };
        let (axis_nodes, axis_weights) = composite_gl(panels);
        let per_axis = axis_nodes.len();
        let total = per_axis.pow(d as u32);
        let mut nodes = Vec::with_capacity(total);
        let mut weights = Vec::with_capacity(total);
        let mut idx = vec![0usize; d];
        'outer: loop {
            let x: Vec<f64> = idx.iter().map(|&i| axis_nodes[i]).collect();
            let w: f64 = idx.iter().map(|&i| axis_weights[i]).product();
            nodes.push(x);
            weights.push(w);
            let mut j = 0;
            loop {
                idx[j] += 1;
                if idx[j] < per_axis {
                    break;
                }
                idx[j] = 0;
                j += 1;
                if j == d {
                    break 'outer;
                }
            }
        }
        let (lo, hi) = spec.t_range();
        let anchors: Vec<f64> = nodes
            .iter()
            .map(|x| {
                // Seed multistarts at the per-node argmax over a coarse scan.
                let mut best = (lo, f64::NEG_INFINITY);
                for j in 0..=64 {
                    let t = lo + (hi - lo) * j as f64 / 64.0;
                    let v = spec.m(t, x);
                    if v > best.1 {
                        best = (t, v);
                    }
                }
                best.0
            })
            .collect();
        Self { spec, nodes, weights, anchors }
    }
}

impl PointObjective for QuadratureObjective<'_> {
    fn n_points(&self) -> usize {
        self.nodes.len()
    }

    fn x(&self, i: usize) -> &[f64] {
        &self.nodes[i]
    }

    fn anchor(&self, i: usize) -> f64 {
        self.anchors[i]
    }

    fn eval(&self, i: usize, v: f64) -> (f64, f64) {
        let x = &self.nodes[i];
        let w = self.weights[i];
        (w * self.spec.m(v, x), w * self.spec.m_deriv_t(v, x))
    }
}

/// Oracle welfare W*: the true-welfare optimum over a dense sieve
/// (k = [`ORACLE_SIEVE_K`]), located with the shared multistart optimizer
/// and re-scored by full quadrature. Returns (W*, the oracle policy).
pub fn oracle_welfare(spec: &DgpSpec) -> Result<(f64, PolicyParams), SimError> {
    let (lo, hi) = spec.t_range();
    let fam = MonotoneSeparableFamily::new(spec.d_x, ORACLE_SIEVE_K, lo, hi);
    let obj = QuadratureObjective::new(spec);
    let cfg = OptimizerConfig {
        n_starts: 24,
        max_iters: 600,
        step_init: None,
        tol: 1e-9,
        seed: mix(ORACLE_SALT, &[spec.d_x as u64, ORACLE_SIEVE_K as u64]),
    };
    let (theta, _) = maximize_space(&obj, &PolicySpace::Monotone(fam.clone()), &cfg)?;
    let params = PolicyParams { theta };
    let w_star = true_welfare(spec, &|x: &[f64]| {
        eval_policy(&fam, &params, x).expect("oracle policy dimension matches")
    })?;
    Ok((w_star, params))
}

/// Which welfare estimator a regret run uses (the propensity oracle is
/// always known inside the harness).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimEstimator {
    /// IPW with the analytic propensity oracle.
    IpwKnown,
    /// Cross-fitted double-debiased scores.
    DoubleDebiased,
}

/// Controls for [`run_regret_experiment`].
#[derive(Debug, Clone)]
pub struct RegretConfig {
    /// Bandwidth grid family.
    pub grid_kind: GridKind,
    /// Grid decay parameter.
    pub rho: f64,
    /// (penalty, estimator) pairs run on each replication.
    pub combos: Vec<(PenaltyKind, SimEstimator)>,
    /// Selection controls; `selection.seed` is the master seed.
    pub selection: SelectionConfig,
    /// Use the DGP's analytic (r, V) instead of estimating the envelope
    /// from each sample.
    pub use_known_bias: bool,
}

impl Default for RegretConfig {
    fn default() -> Self {
        Self {
            grid_kind: GridKind::Exponential,
            rho: 2.0,
            combos: vec![(PenaltyKind::Rademacher, SimEstimator::IpwKnown)],
            selection: SelectionConfig::default(),
            use_known_bias: true,
        }
    }
}

/// One replication's outcome for one (penalty, estimator) combination.
#[derive(Debug, Clone, Serialize)]
pub struct RegretRecord {
    /// Sample size.
    pub n: usize,
    /// Replication index.
    pub rep: usize,
    /// Penalty family used.
    pub penalty: PenaltyKind,
    /// Estimator used.
    pub estimator: EstimatorKind,
    /// Selected bandwidth.
    pub h_hat: f64,
    /// Selected sieve dimension.
    pub k_hat: usize,
    /// The winning cell's estimated welfare.
    pub welfare_hat: f64,
    /// Exact population welfare of the selected policy.
    pub true_welfare: f64,
    /// Oracle welfare W*.
    pub oracle_welfare: f64,
    /// W* - W(selected policy).
    pub regret: f64,
}

/// Run the full selector on `reps` independent samples at each size in
/// `ns` and score every selected policy against the oracle.
///
/// Per replication: seed = mix(master, n, rep), a fresh sample, one bias
/// fit (analytic or envelope-estimated), then one selection per
/// (penalty, estimator) combo. Replications run in parallel; output
/// order and all values are deterministic given the config.
pub fn run_regret_experiment(
    spec: &DgpSpec,
    ns: &[usize],
    reps: usize,
    cfg: &RegretConfig,
) -> Result<Vec<RegretRecord>, SimError> {
    let (w_star, _) = oracle_welfare(spec)?;
    let mut out = Vec::new();
    for &n in ns {
        let per_rep: Vec<Vec<RegretRecord>> = (0..reps)
            .into_par_iter()
            .map(|rep| -> Result<Vec<RegretRecord>, SimError> {
                let seed = mix(cfg.selection.seed, &[REP_SALT, n as u64, rep as u64]);
                let (ds, oracle) = generate(spec, n, seed);
                let bias_fit = if cfg.use_known_bias {
                    BiasBoundFit {
                        r_hat: spec.known_r,
                        v_hat: spec.known_v,
                        gamma: DEFAULT_GAMMA,
                        degenerate: false,
                    }
                } else {
                    let curve = MuFtCurve::estimate(&ds, seed)?;
                    fit_envelope(&curve, n, 4)?
                };
                let grid = make_grid(cfg.grid_kind, cfg.rho, n, bias_fit.r_hat)?;
                let mut recs = Vec::with_capacity(cfg.combos.len());
                for &(penalty, estimator) in &cfg.combos {
                    let mut sel_cfg = cfg.selection.clone();
                    sel_cfg.seed = seed;
                    let spec_est = match estimator {
                        SimEstimator::IpwKnown => EstimatorSpec::IpwKnown(&oracle),
                        SimEstimator::DoubleDebiased => EstimatorSpec::DoubleDebiased,
                    };
                    let res = select(&ds, &grid, penalty, &spec_est, &bias_fit, &sel_cfg)?;
                    let fam = MonotoneSeparableFamily::new(
                        ds.d_x,
                        res.k_hat,
                        res.out_range.0,
                        res.out_range.1,
                    );
                    let policy = res.policy.clone();
                    let tw = true_welfare(spec, &|x: &[f64]| {
                        eval_policy(&fam, &policy, x).expect("selected policy dimension matches")
                    })?;
                    let row = res
                        .table
                        .iter()
                        .find(|r| r.h == res.h_hat && r.k == res.k_hat)
                        .expect("winning cell is present in the score table");
                    recs.push(RegretRecord {
                        n,
                        rep,
                        penalty,
                        estimator: res.estimator,
                        h_hat: res.h_hat,
                        k_hat: res.k_hat,
                        welfare_hat: row.welfare,
                        true_welfare: tw,
                        oracle_welfare: w_star,
                        regret: w_star - tw,
                    });
                }
                Ok(recs)
            })
            .collect::<Result<_, _>>()?;
        out.extend(per_rep.into_iter().flatten());
    }
    Ok(out)
}

/// Write regret records as CSV with columns
/// n,rep,penalty,estimator,h_hat,k_hat,welfare_hat,true_welfare,oracle_welfare,regret.
pub fn write_regret_csv<W: std::io::Write>(
    records: &[RegretRecord],
    writer: W,
) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    for rec in records {
        w.serialize(rec)?;
    }
    w.flush()?;
    Ok(())
}
