//! Deterministic numerical utilities: compensated summation, quadrature,
//! and quantiles.
//!
//! Every reduction here has a fixed evaluation order so results are
//! byte-identical regardless of thread count; parallel callers collect
//! per-item values in index order and reduce through these functions.

/// Below this length a simple sequential sum is accurate enough.
const PAIRWISE_BASE: usize = 32;

/// Pairwise (cascade) summation: O(log n) rounding-error growth and a
/// deterministic association order independent of the platform.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= PAIRWISE_BASE {
        let mut acc = 0.0;
        for &x in xs {
            acc += x;
        }
        return acc;
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Arithmetic mean via pairwise summation; 0 for an empty slice.
pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    pairwise_sum(xs) / xs.len() as f64
}

/// Sample standard deviation (denominator n-1); 0 when n < 2.
pub fn sample_sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let sq: Vec<f64> = xs.iter().map(|&x| (x - m) * (x - m)).collect();
    (pairwise_sum(&sq) / (xs.len() - 1) as f64).sqrt()
}

/// Median of a slice (sorted copy, midpoint interpolation for even n).
pub fn median(xs: &[f64]) -> f64 {
    quantile(xs, 0.5)
}

/// Empirical quantile with linear interpolation between order statistics.
///
/// `q` is clamped to [0,1]. Returns NaN for an empty slice.
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut sorted = xs.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("non-finite value in quantile"));
    let q = q.clamp(0.0, 1.0);
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let w = pos - lo as f64;
        sorted[lo] * (1.0 - w) + sorted[hi] * w
    }
}

/// Adaptive Simpson quadrature of `f` on [a, b] to absolute tolerance `tol`.
///
/// Classic bisection with Richardson correction; depth capped at 60 which
/// is unreachable for the smooth integrands used here.
pub fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &impl Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let delta = left + right - whole;
        if depth >= 60 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            recurse(f, a, m, fa, flm, fm, left, tol / 2.0, depth + 1)
                + recurse(f, m, b, fm, frm, fb, right, tol / 2.0, depth + 1)
        }
    }
    if a == b {
        return 0.0;
    }
    let m = 0.5 * (a + b);
    let fa = f(a);
    let fm = f(m);
    let fb = f(b);
    let whole = simpson(fa, fm, fb, a, b);
    recurse(f, a, b, fa, fm, fb, whole, tol, 0)
}

/// Gauss-Legendre nodes and weights on [a, b].
///
/// Newton iteration on Legendre polynomials; accurate to ~1e-15 for the
/// node counts used here (n <= 2048).
pub fn gauss_legendre(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "gauss_legendre needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess for the i-th root of P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Evaluate P_n(x) and P_n'(x) by the three-term recurrence.
            let mut p0 = 1.0;
            let mut p1 = x;
            for j in 2..=n {
                let pj = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = pj;
            }
            let p = if n == 1 { x } else { p1 };
            dp = if n == 1 {
                1.0
            } else {
                n as f64 * (x * p1 - p0) / (x * x - 1.0)
            };
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    // Affine map from [-1,1] to [a,b].
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    for i in 0..n {
        nodes[i] = mid + half * nodes[i];
        weights[i] *= half;
    }
    (nodes, weights)
}

/// Standard normal CDF via a Chebyshev-fitted complementary error
/// function (absolute error below 1.3e-7, ample for density oracles).
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

fn erfc(x: f64) -> f64 {
    let ax = x.abs();
    let t = 1.0 / (1.0 + 0.5 * ax);
    let poly = -1.265_512_23
        + t * (1.000_023_68
            + t * (0.374_091_96
                + t * (0.096_784_18
                    + t * (-0.186_288_06
                        + t * (0.278_868_07
                            + t * (-1.135_203_98
                                + t * (1.488_515_87
                                    + t * (-0.822_152_23 + t * 0.170_872_77))))))));
    let tau = t * (-ax * ax + poly).exp();
    if x >= 0.0 {
        tau
    } else {
        2.0 - tau
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn pairwise_sum_matches_exact_on_integers() {
        let xs: Vec<f64> = (1..=1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&xs), 500_500.0);
    }

    #[test]
    fn pairwise_sum_is_splitting_invariant_for_fixed_input() {
        // Determinism: same slice, same result, every call.
        let xs: Vec<f64> = (0..777).map(|i| ((i * 37) % 101) as f64 * 0.1 - 3.0).collect();
        let a = pairwise_sum(&xs);
        let b = pairwise_sum(&xs);
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn simpson_integrates_polynomial_exactly() {
        // x^3 on [0,2] = 4; Simpson is exact for cubics.
        let v = adaptive_simpson(&|x: f64| x * x * x, 0.0, 2.0, 1e-12);
        assert_relative_eq!(v, 4.0, max_relative = 1e-12);
    }

    #[test]
    fn simpson_integrates_oscillatory_cosine() {
        let v = adaptive_simpson(&|x: f64| (10.0 * x).cos(), 0.0, 1.0, 1e-12);
        assert_relative_eq!(v, (10.0f64).sin() / 10.0, epsilon = 1e-10);
    }

    #[test]
    fn gauss_legendre_exact_for_high_degree_polynomials() {
        // n nodes integrate degree 2n-1 exactly: x^9 on [0,1] with n=5.
        let (nodes, weights) = gauss_legendre(5, 0.0, 1.0);
        let v: f64 = nodes
            .iter()
            .zip(&weights)
            .map(|(&x, &w)| w * x.powi(9))
            .sum();
        assert_relative_eq!(v, 0.1, epsilon = 1e-14);
    }

    #[test]
    fn gauss_legendre_weights_sum_to_interval_length() {
        for n in [1, 2, 7, 64, 301] {
            let (_, weights) = gauss_legendre(n, -2.0, 5.0);
            assert_relative_eq!(pairwise_sum(&weights), 7.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn quantile_interpolates() {
        let xs = [4.0, 1.0, 3.0, 2.0];
        assert_eq!(quantile(&xs, 0.0), 1.0);
        assert_eq!(quantile(&xs, 1.0), 4.0);
        assert_relative_eq!(quantile(&xs, 0.5), 2.5);
        assert_relative_eq!(median(&xs), 2.5);
    }

    #[test]
    fn sd_of_known_sample() {
        let xs = [2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0];
        // Sample variance 4.571428...; sd = sqrt(32/7).
        assert_relative_eq!(sample_sd(&xs), (32.0f64 / 7.0).sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn normal_cdf_matches_reference_values() {
        // Reference values from standard normal tables.
        assert_relative_eq!(normal_cdf(0.0), 0.5, epsilon = 1e-7);
        assert_relative_eq!(normal_cdf(1.0), 0.841_344_746_068_543, epsilon = 2e-7);
        assert_relative_eq!(normal_cdf(-1.0), 0.158_655_253_931_457, epsilon = 2e-7);
        assert_relative_eq!(normal_cdf(1.96), 0.975_002_104_851_780, epsilon = 2e-7);
        assert_relative_eq!(normal_cdf(-3.0), 1.349_898_031_630_095e-3, epsilon = 1e-8);
        // Symmetry.
        for z in [0.3, 0.9, 2.2] {
            assert_relative_eq!(normal_cdf(z) + normal_cdf(-z), 1.0, epsilon = 1e-12);
        }
    }
}
