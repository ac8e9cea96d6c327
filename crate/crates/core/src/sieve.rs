//! Sieve policy families.
//!
//! The workhorse class is the monotone separable family: each covariate
//! coordinate gets a piecewise-linear function built from triangular (hat)
//! basis functions at the uniform nodes {0, 1/k, ..., 1}, the policy is the
//! sum across coordinates, and coefficients are constrained to be
//! nondecreasing within each coordinate so the policy is monotone. The basis
//! is nodal: phi_{k,k'}(k'/k) = 1 and 0 at every other node, so coefficients
//! are function values at the nodes and the hats form a partition of unity.
//!
//! A continuous piecewise-linear policy over a scalar score is provided for
//! evaluation and validation of externally supplied policies.

use crate::error::SieveError;
use serde::{Deserialize, Serialize};

/// Componentwise tolerance for monotone-cone membership.
pub const CONE_TOL: f64 = 1e-9;
/// Tolerance for segment agreement at piecewise-linear thresholds.
pub const CONTINUITY_TOL: f64 = 1e-9;

/// The monotone separable sieve family Pi_k on [0,1]^{d_X}.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonotoneSeparableFamily {
    /// Covariate dimension.
    pub d_x: usize,
    /// Sieve index k >= 1: each coordinate uses k+1 nodes.
    pub k: usize,
    /// Lower clamp for the policy output (typically t_lo).
    pub out_lo: f64,
    /// Upper clamp for the policy output (typically t_hi).
    pub out_hi: f64,
}

impl MonotoneSeparableFamily {
    /// Construct a family; panics on degenerate arguments.
    pub fn new(d_x: usize, k: usize, out_lo: f64, out_hi: f64) -> Self {
        assert!(d_x >= 1, "d_x must be >= 1");
        assert!(k >= 1, "sieve index k must be >= 1");
        assert!(out_lo <= out_hi, "output clamp must be ordered");
        assert!(out_lo.is_finite() && out_hi.is_finite());
        Self { d_x, k, out_lo, out_hi }
    }

    /// Parameter dimension (k+1) * d_X.
    pub fn dim(&self) -> usize {
        (self.k + 1) * self.d_x
    }

    /// The two active basis nodes for one clamped coordinate value:
    /// returns (lower node index, weight of the upper node).
    #[inline]
    fn segment(&self, xp: f64) -> (usize, f64) {
        let xp = xp.clamp(0.0, 1.0);
        let u = xp * self.k as f64;
        let mut j = u.floor() as usize;
        if j >= self.k {
            j = self.k - 1; // x = 1 handled by the last segment
        }
        (j, u - j as f64)
    }

    /// Flat indices into theta and interpolation weights of the (at most
    /// 2 * d_X) active basis functions at `x`. Weights sum to d_X.
    pub fn active_nodes(&self, x: &[f64]) -> Vec<(usize, f64)> {
        let mut out = Vec::with_capacity(2 * self.d_x);
        for (p, &xp) in x.iter().enumerate() {
            let (j, w) = self.segment(xp);
            let base = p * (self.k + 1);
            out.push((base + j, 1.0 - w));
            out.push((base + j + 1, w));
        }
        out
    }

    /// Policy value before the output clamp.
    pub fn eval_unclamped(&self, theta: &[f64], x: &[f64]) -> f64 {
        debug_assert_eq!(theta.len(), self.dim());
        debug_assert_eq!(x.len(), self.d_x);
        let mut acc = 0.0;
        for (p, &xp) in x.iter().enumerate() {
            let (j, w) = self.segment(xp);
            let base = p * (self.k + 1);
            acc += theta[base + j] * (1.0 - w) + theta[base + j + 1] * w;
        }
        acc
    }
}

/// Coefficients theta for a [`MonotoneSeparableFamily`] member, grouped as
/// theta_p = (theta_{p,0}, ..., theta_{p,k}) per covariate.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    /// Flat coefficient vector of length (k+1) * d_X.
    pub theta: Vec<f64>,
}

impl PolicyParams {
    /// Wrap a coefficient vector, checking its length against the family.
    pub fn new(theta: Vec<f64>, fam: &MonotoneSeparableFamily) -> Result<Self, SieveError> {
        if theta.len() != fam.dim() {
            return Err(SieveError::DimensionMismatch {
                expected: fam.dim(),
                got: theta.len(),
            });
        }
        Ok(Self { theta })
    }

    /// Componentwise monotone-cone membership within `tol`.
    pub fn in_monotone_cone(&self, fam: &MonotoneSeparableFamily, tol: f64) -> bool {
        let per = fam.k + 1;
        (0..fam.d_x).all(|p| {
            let block = &self.theta[p * per..(p + 1) * per];
            block.windows(2).all(|w| w[1] >= w[0] - tol)
        })
    }

    /// The constant policy pi(x) = c as a feasible coefficient vector
    /// (each coordinate contributes c / d_X).
    pub fn constant(c: f64, fam: &MonotoneSeparableFamily) -> Self {
        Self {
            theta: vec![c / fam.d_x as f64; fam.dim()],
        }
    }
}

/// Evaluate a monotone separable policy at covariates `x` (coordinates are
/// clamped to [0,1]; the output is clamped to [out_lo, out_hi]).
pub fn eval_policy(
    fam: &MonotoneSeparableFamily,
    params: &PolicyParams,
    x: &[f64],
) -> Result<f64, SieveError> {
    if params.theta.len() != fam.dim() {
        return Err(SieveError::DimensionMismatch {
            expected: fam.dim(),
            got: params.theta.len(),
        });
    }
    if x.len() != fam.d_x {
        return Err(SieveError::DimensionMismatch {
            expected: fam.d_x,
            got: x.len(),
        });
    }
    Ok(fam
        .eval_unclamped(&params.theta, x)
        .clamp(fam.out_lo, fam.out_hi))
}

/// VC-dimension bound of the family: its parameter dimension (k+1) * d_X.
pub fn vc_bound(fam: &MonotoneSeparableFamily) -> usize {
    fam.dim()
}

/// Continuous piecewise-linear policy over a scalar score.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinearPolicy {
    /// Strictly increasing segment boundaries s_1 < ... < s_k.
    thresholds: Vec<f64>,
    /// Intercepts alpha_0..alpha_k, one per segment.
    intercepts: Vec<f64>,
    /// Slopes beta_0..beta_k, one per segment.
    slopes: Vec<f64>,
}

impl PiecewiseLinearPolicy {
    /// Validate continuity at every threshold and threshold ordering.
    pub fn new(
        thresholds: Vec<f64>,
        intercepts: Vec<f64>,
        slopes: Vec<f64>,
    ) -> Result<Self, SieveError> {
        assert_eq!(
            intercepts.len(),
            thresholds.len() + 1,
            "need one segment more than thresholds"
        );
        assert_eq!(intercepts.len(), slopes.len());
        for (j, w) in thresholds.windows(2).enumerate() {
            if w[1] <= w[0] {
                return Err(SieveError::UnorderedThresholds(j + 1));
            }
        }
        for (j, &s) in thresholds.iter().enumerate() {
            let left = intercepts[j] + slopes[j] * s;
            let right = intercepts[j + 1] + slopes[j + 1] * s;
            let gap = (left - right).abs();
            if gap > CONTINUITY_TOL {
                return Err(SieveError::ContinuityViolation { at: s, gap });
            }
        }
        Ok(Self {
            thresholds,
            intercepts,
            slopes,
        })
    }

    /// Number of thresholds (segments minus one).
    pub fn n_thresholds(&self) -> usize {
        self.thresholds.len()
    }
}

/// Evaluate the active segment of a piecewise-linear policy at `score`.
pub fn eval_piecewise(pl: &PiecewiseLinearPolicy, score: f64) -> f64 {
    // partition_point returns the number of thresholds <= score, which is
    // exactly the active segment under s_j <= score < s_{j+1}.
    let seg = pl.thresholds.partition_point(|&s| s <= score);
    pl.intercepts[seg] + pl.slopes[seg] * score
}

/// Best-achievable mean absolute gap between the sieve family and a
/// monotone scalar target, computed by nodal interpolation of the target
/// (feasible and monotone, hence an upper bound on the true gap that
/// attains the family's approximation rate).
///
/// Requires d_X = 1: the separable family only reproduces scalar targets.
pub fn sieve_approx_gap(
    fam: &MonotoneSeparableFamily,
    target: impl Fn(f64) -> f64,
    probe_grid: &[f64],
) -> f64 {
    assert_eq!(fam.d_x, 1, "approximation gap is defined for d_X = 1");
    assert!(!probe_grid.is_empty(), "empty probe grid");
    let theta: Vec<f64> = (0..=fam.k)
        .map(|j| target(j as f64 / fam.k as f64))
        .collect();
    let abs_err: Vec<f64> = probe_grid
        .iter()
        .map(|&x| (fam.eval_unclamped(&theta, &[x]) - target(x)).abs())
        .collect();
    crate::num::mean(&abs_err)
}

/// On-disk policy record (JSON).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PolicyFile {
    /// Family tag; currently always `monotone_separable`.
    pub family: String,
    /// Covariate dimension.
    pub d_x: usize,
    /// Sieve index.
    pub k: usize,
    /// Flat coefficient vector.
    pub theta: Vec<f64>,
    /// Per-column [min, max] mapping raw covariates into [0,1].
    pub x_scale: Vec<[f64; 2]>,
    /// Output clamp bounds.
    pub out_lo: f64,
    pub out_hi: f64,
}

/// Family tag used in policy files.
pub const FAMILY_TAG: &str = "monotone_separable";

impl PolicyFile {
    /// Assemble a policy record from its parts.
    pub fn from_parts(
        fam: &MonotoneSeparableFamily,
        params: &PolicyParams,
        x_scale: &[(f64, f64)],
    ) -> Self {
        Self {
            family: FAMILY_TAG.to_string(),
            d_x: fam.d_x,
            k: fam.k,
            theta: params.theta.clone(),
            x_scale: x_scale.iter().map(|&(lo, hi)| [lo, hi]).collect(),
            out_lo: fam.out_lo,
            out_hi: fam.out_hi,
        }
    }

    /// Parse and validate a policy record from JSON text.
    pub fn from_json(text: &str) -> Result<Self, SieveError> {
        let pf: PolicyFile =
            serde_json::from_str(text).map_err(|e| SieveError::BadPolicyFile(e.to_string()))?;
        pf.validate()?;
        Ok(pf)
    }

    /// Serialize to JSON text.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("policy record serializes")
    }

    /// Structural validation: family tag, dimensions, cone membership.
    pub fn validate(&self) -> Result<(), SieveError> {
        if self.family != FAMILY_TAG {
            return Err(SieveError::BadPolicyFile(format!(
                "unknown family `{}`",
                self.family
            )));
        }
        if self.d_x == 0 || self.k == 0 {
            return Err(SieveError::BadPolicyFile(
                "d_x and k must be positive".into(),
            ));
        }
        if self.x_scale.len() != self.d_x {
            return Err(SieveError::BadPolicyFile(format!(
                "x_scale has {} columns, expected {}",
                self.x_scale.len(),
                self.d_x
            )));
        }
        let fam = self.family()?;
        let params = PolicyParams::new(self.theta.clone(), &fam)
            .map_err(|e| SieveError::BadPolicyFile(e.to_string()))?;
        if !params.in_monotone_cone(&fam, CONE_TOL) {
            return Err(SieveError::BadPolicyFile(
                "coefficients violate the monotone cone".into(),
            ));
        }
        Ok(())
    }

    /// The family this record describes.
    pub fn family(&self) -> Result<MonotoneSeparableFamily, SieveError> {
        if self.out_lo > self.out_hi || !self.out_lo.is_finite() || !self.out_hi.is_finite() {
            return Err(SieveError::BadPolicyFile("bad output clamp".into()));
        }
        Ok(MonotoneSeparableFamily::new(
            self.d_x, self.k, self.out_lo, self.out_hi,
        ))
    }

    /// Evaluate at covariates already scaled to [0,1]^{d_X}.
    pub fn eval_scaled(&self, x: &[f64]) -> Result<f64, SieveError> {
        let fam = self.family()?;
        let params = PolicyParams::new(self.theta.clone(), &fam)?;
        eval_policy(&fam, &params, x)
    }

    /// Evaluate at raw covariates, applying the stored x_scale first.
    pub fn eval_raw(&self, x_raw: &[f64]) -> Result<f64, SieveError> {
        if x_raw.len() != self.d_x {
            return Err(SieveError::DimensionMismatch {
                expected: self.d_x,
                got: x_raw.len(),
            });
        }
        let scaled: Vec<f64> = x_raw
            .iter()
            .zip(&self.x_scale)
            .map(|(&v, &[lo, hi])| if hi > lo { (v - lo) / (hi - lo) } else { 0.5 })
            .collect();
        self.eval_scaled(&scaled)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn fam1(k: usize) -> MonotoneSeparableFamily {
        MonotoneSeparableFamily::new(1, k, -100.0, 100.0)
    }

    /// Oracle: direct summation of every triangular basis function.
    fn dense_basis_eval(fam: &MonotoneSeparableFamily, theta: &[f64], x: &[f64]) -> f64 {
        let k = fam.k as f64;
        let mut acc = 0.0;
        for (p, &xp) in x.iter().enumerate() {
            let xp = xp.clamp(0.0, 1.0);
            for j in 0..=fam.k {
                let phi = (1.0 - (k * xp - j as f64).abs()).max(0.0);
                acc += theta[p * (fam.k + 1) + j] * phi;
            }
        }
        acc
    }

    #[test]
    fn nodal_evaluation_returns_coefficients() {
        let fam = fam1(2);
        let params = PolicyParams::new(vec![0.0, 1.0, 2.0], &fam).unwrap();
        assert_eq!(eval_policy(&fam, &params, &[0.5]).unwrap(), 1.0);
        assert_eq!(eval_policy(&fam, &params, &[0.0]).unwrap(), 0.0);
        assert_eq!(eval_policy(&fam, &params, &[1.0]).unwrap(), 2.0);
    }

    #[test]
    fn midpoint_interpolates_between_nodes() {
        let fam = fam1(2);
        let params = PolicyParams::new(vec![0.0, 1.0, 2.0], &fam).unwrap();
        // x = 0.25 lies between nodes 0 and 0.5: interpolates 0 and 1.
        assert_relative_eq!(eval_policy(&fam, &params, &[0.25]).unwrap(), 0.5);
        assert_relative_eq!(
            dense_basis_eval(&fam, &params.theta, &[0.25]),
            0.5,
            epsilon = 1e-15
        );
    }

    #[test]
    fn zero_coefficients_give_zero_before_clamp() {
        let fam = fam1(3);
        let theta = vec![0.0; fam.dim()];
        for x in [0.0, 0.21, 0.7, 1.0] {
            assert_eq!(fam.eval_unclamped(&theta, &[x]), 0.0);
        }
        // With a positive lower clamp the output is clamped afterwards.
        let clamped = MonotoneSeparableFamily::new(1, 3, 0.5, 2.0);
        let params = PolicyParams::new(theta, &clamped).unwrap();
        assert_eq!(eval_policy(&clamped, &params, &[0.3]).unwrap(), 0.5);
    }

    #[test]
    fn coordinates_outside_unit_box_are_clamped() {
        let fam = fam1(2);
        let params = PolicyParams::new(vec![0.0, 1.0, 2.0], &fam).unwrap();
        assert_eq!(
            eval_policy(&fam, &params, &[-0.4]).unwrap(),
            eval_policy(&fam, &params, &[0.0]).unwrap()
        );
        assert_eq!(
            eval_policy(&fam, &params, &[1.9]).unwrap(),
            eval_policy(&fam, &params, &[1.0]).unwrap()
        );
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let fam = fam1(2);
        let err = PolicyParams::new(vec![0.0, 1.0], &fam).unwrap_err();
        assert!(matches!(
            err,
            SieveError::DimensionMismatch { expected: 3, got: 2 }
        ));
        let params = PolicyParams { theta: vec![0.0; 3] };
        let err = eval_policy(&fam, &params, &[0.1, 0.2]).unwrap_err();
        assert!(matches!(err, SieveError::DimensionMismatch { .. }));
    }

    #[test]
    fn vc_bound_examples() {
        assert_eq!(vc_bound(&MonotoneSeparableFamily::new(3, 4, 0.0, 1.0)), 15);
        assert_eq!(vc_bound(&MonotoneSeparableFamily::new(1, 1, 0.0, 1.0)), 2);
        assert_eq!(vc_bound(&MonotoneSeparableFamily::new(2, 9, 0.0, 1.0)), 20);
    }

    #[test]
    fn piecewise_single_segment() {
        let pl = PiecewiseLinearPolicy::new(vec![], vec![1.0], vec![2.0]).unwrap();
        assert_eq!(eval_piecewise(&pl, 3.0), 7.0);
    }

    #[test]
    fn piecewise_degenerate_kink_is_identity() {
        let pl =
            PiecewiseLinearPolicy::new(vec![0.0], vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        for s in [-2.0, -0.5, 0.0, 0.5, 2.0] {
            assert_eq!(eval_piecewise(&pl, s), s);
        }
    }

    #[test]
    fn piecewise_continuity_enforced_and_segments_agree() {
        // Discontinuous at s=1: left value 1, right value 2.
        let err = PiecewiseLinearPolicy::new(vec![1.0], vec![0.0, 1.0], vec![1.0, 1.0])
            .unwrap_err();
        assert!(matches!(err, SieveError::ContinuityViolation { .. }));
        // Continuous kink: left 0+1*s, right -1+2*s agree at s=1.
        let pl = PiecewiseLinearPolicy::new(vec![1.0], vec![0.0, -1.0], vec![1.0, 2.0]).unwrap();
        let left: f64 = 0.0 + 1.0 * 1.0;
        let right: f64 = -1.0 + 2.0 * 1.0;
        assert!((left - right).abs() <= CONTINUITY_TOL);
        assert_eq!(eval_piecewise(&pl, 1.0), right);
        // Thresholds must strictly increase.
        let err = PiecewiseLinearPolicy::new(
            vec![1.0, 1.0],
            vec![0.0, -1.0, -1.0],
            vec![1.0, 2.0, 2.0],
        )
        .unwrap_err();
        assert!(matches!(err, SieveError::UnorderedThresholds(1)));
    }

    #[test]
    fn approx_gap_zero_for_linear_targets() {
        let grid: Vec<f64> = (0..=1000).map(|i| i as f64 / 1000.0).collect();
        for k in [1, 2, 5, 9] {
            let gap = sieve_approx_gap(&fam1(k), |x| x, &grid);
            assert!(gap <= 1e-14, "k={k}: gap {gap:e}");
        }
    }

    #[test]
    fn approx_gap_shrinks_under_refinement_for_square_target() {
        let grid: Vec<f64> = (0..=1000).map(|i| i as f64 / 1000.0).collect();
        // Oracle: direct interpolation-error computation per probe point.
        let oracle = |k: usize| -> f64 {
            let errs: Vec<f64> = grid
                .iter()
                .map(|&x| {
                    let kk = k as f64;
                    let j = ((x * kk).floor() as usize).min(k - 1);
                    let (a, b) = (j as f64 / kk, (j + 1) as f64 / kk);
                    let interp = a * a + (x - a) / (b - a) * (b * b - a * a);
                    (interp - x * x).abs()
                })
                .collect();
            crate::num::mean(&errs)
        };
        let gaps: Vec<f64> = [2usize, 4, 8]
            .iter()
            .map(|&k| sieve_approx_gap(&fam1(k), |x| x * x, &grid))
            .collect();
        assert!(gaps[2] <= gaps[1] && gaps[1] <= gaps[0], "{gaps:?}");
        for (g, k) in gaps.iter().zip([2usize, 4, 8]) {
            assert_relative_eq!(*g, oracle(k), epsilon = 1e-12);
        }
    }

    #[test]
    fn approx_rate_is_at_least_one_over_k_for_lipschitz_target() {
        // Kinked monotone Lipschitz target; kink off the node lattice.
        let target = |x: f64| (2.0 * (x - 1.0 / 3.0)).max(0.0);
        let grid: Vec<f64> = (0..=4000).map(|i| i as f64 / 4000.0).collect();
        let mut scaled = Vec::new();
        for k in [2usize, 4, 8, 16] {
            let gap = sieve_approx_gap(&fam1(k), target, &grid);
            scaled.push(gap * k as f64);
        }
        // gap(k) * k stays bounded by its coarsest value: rate O(1/k).
        for s in &scaled {
            assert!(*s <= scaled[0] + 1e-12, "{scaled:?}");
        }
    }

    #[test]
    fn policy_file_round_trip() {
        let fam = MonotoneSeparableFamily::new(2, 2, 0.0, 4.0);
        let params = PolicyParams::new(vec![0.0, 0.5, 1.0, 1.0, 1.5, 2.0], &fam).unwrap();
        let pf = PolicyFile::from_parts(&fam, &params, &[(0.0, 10.0), (-1.0, 1.0)]);
        let text = pf.to_json();
        let back = PolicyFile::from_json(&text).unwrap();
        assert_eq!(back, pf);
        // Raw evaluation applies x_scale: raw (5.0, 0.0) -> scaled (0.5, 0.5).
        let via_raw = back.eval_raw(&[5.0, 0.0]).unwrap();
        let via_scaled = back.eval_scaled(&[0.5, 0.5]).unwrap();
        assert_eq!(via_raw, via_scaled);
    }

    #[test]
    fn policy_file_rejects_bad_records() {
        assert!(PolicyFile::from_json("{").is_err());
        let fam = fam1(1);
        let params = PolicyParams::new(vec![1.0, 0.0], &fam).unwrap(); // violates cone
        let pf = PolicyFile::from_parts(&fam, &params, &[(0.0, 1.0)]);
        assert!(matches!(
            PolicyFile::from_json(&pf.to_json()),
            Err(SieveError::BadPolicyFile(_))
        ));
        let mut bad_tag = PolicyFile::from_parts(
            &fam,
            &PolicyParams::new(vec![0.0, 1.0], &fam).unwrap(),
            &[(0.0, 1.0)],
        );
        bad_tag.family = "mystery".into();
        assert!(bad_tag.validate().is_err());
    }

    proptest! {
        #[test]
        fn monotone_theta_gives_monotone_policy(
            raw in proptest::collection::vec(0.0f64..1.0, 6),
            x in proptest::collection::vec(0.0f64..1.0, 2),
            bump in proptest::collection::vec(0.0f64..0.5, 2),
        ) {
            // Two coordinates, k=2: sort each block to land in the cone.
            let fam = MonotoneSeparableFamily::new(2, 2, -100.0, 100.0);
            let mut theta = raw.clone();
            theta[0..3].sort_by(|a, b| a.partial_cmp(b).unwrap());
            theta[3..6].sort_by(|a, b| a.partial_cmp(b).unwrap());
            let params = PolicyParams::new(theta, &fam).unwrap();
            prop_assert!(params.in_monotone_cone(&fam, CONE_TOL));
            let x_hi: Vec<f64> = x.iter().zip(&bump).map(|(a, b)| (a + b).min(1.0)).collect();
            let lo = eval_policy(&fam, &params, &x).unwrap();
            let hi = eval_policy(&fam, &params, &x_hi).unwrap();
            prop_assert!(lo <= hi + 1e-12);
        }

        #[test]
        fn segment_lookup_matches_dense_basis_sum(
            theta in proptest::collection::vec(-3.0f64..3.0, 5),
            x in -0.5f64..1.5,
        ) {
            let fam = fam1(4);
            let fast = fam.eval_unclamped(&theta, &[x]);
            let dense = dense_basis_eval(&fam, &theta, &[x]);
            prop_assert!((fast - dense).abs() <= 1e-12, "{fast} vs {dense}");
        }
    }
}
