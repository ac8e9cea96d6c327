//! Infinite-order flat-top smoothing kernel.
//!
//! The kernel is fixed by its Fourier transform K^FT: a trapezoid equal to 1
//! on [-1,1], falling linearly to 0 at |xi| = 2. Inverting the transform
//! gives the closed form
//!
//!   K(u) = (cos u - cos 2u) / (pi u^2) = 2 sin(3u/2) sin(u/2) / (pi u^2),
//!
//! evaluated by a Taylor series near u = 0 to avoid 0/0. Because K^FT is
//! exactly flat around the origin the kernel has vanishing moments of every
//! order, and the smoothing bias of welfare estimates built on it admits an
//! exact closed-form bound (see the `biasbound` module).

use crate::error::KernelError;

/// K^FT is identically 1 on [-flat, flat].
pub const FLAT_CUTOFF: f64 = 1.0;
/// K^FT vanishes outside [-support, support].
pub const SUPPORT_CUTOFF: f64 = 2.0;
/// |u| below which the Taylor series replaces the closed form. At 1e-3 the
/// truncated series is accurate to ~1e-22, far below f64 resolution.
pub const TAYLOR_THRESHOLD: f64 = 1e-3;

/// kappa_2 = integral of K^2 = (1/2pi) * integral of (K^FT)^2 = 4/(3 pi).
pub const KAPPA2: f64 = 4.0 / (3.0 * std::f64::consts::PI);
/// kappa_bar = sup K = K(0) = 3/(2 pi).
pub const KAPPA_BAR: f64 = 3.0 / (2.0 * std::f64::consts::PI);

/// The flat-top trapezoid kernel with its evaluation thresholds.
#[derive(Debug, Clone, Copy)]
pub struct FlatTopKernel {
    /// Half-width of the flat region of K^FT.
    pub flat_cutoff: f64,
    /// Half-width of the support of K^FT.
    pub support_cutoff: f64,
    /// Switch point between the Taylor series and the closed form.
    pub taylor_threshold: f64,
}

impl Default for FlatTopKernel {
    fn default() -> Self {
        Self {
            flat_cutoff: FLAT_CUTOFF,
            support_cutoff: SUPPORT_CUTOFF,
            taylor_threshold: TAYLOR_THRESHOLD,
        }
    }
}

impl FlatTopKernel {
    /// K(u). Caller guarantees a finite argument.
    #[inline]
    pub fn value(&self, u: f64) -> f64 {
        debug_assert!(u.is_finite());
        let pi = std::f64::consts::PI;
        if u.abs() <= self.taylor_threshold {
            // (1/pi) * (3/2 - (5/8) u^2 + (7/80) u^4 - (17/2688) u^6),
            // the series of (cos u - cos 2u)/u^2 divided by pi.
            let u2 = u * u;
            (1.5 - u2 * (0.625 - u2 * (0.0875 - u2 * (17.0 / 2688.0)))) / pi
        } else {
            // Product form avoids the catastrophic cancellation of
            // cos u - cos 2u for small u.
            2.0 * (1.5 * u).sin() * (0.5 * u).sin() / (pi * u * u)
        }
    }

    /// dK/du. Caller guarantees a finite argument. K'(0) = 0 by symmetry.
    #[inline]
    pub fn deriv(&self, u: f64) -> f64 {
        debug_assert!(u.is_finite());
        let pi = std::f64::consts::PI;
        if u.abs() <= self.taylor_threshold {
            // (1/pi) * (-(5/4) u + (7/20) u^3 - (17/448) u^5).
            let u2 = u * u;
            u * (-1.25 + u2 * (0.35 - u2 * (17.0 / 448.0))) / pi
        } else {
            // Differentiate (cos u - cos 2u)/(pi u^2) directly.
            let num = u * (2.0 * (2.0 * u).sin() - u.sin())
                - 4.0 * (1.5 * u).sin() * (0.5 * u).sin();
            num / (pi * u * u * u)
        }
    }

    /// Fourier transform K^FT(xi): the trapezoid.
    #[inline]
    pub fn ft(&self, xi: f64) -> f64 {
        debug_assert!(xi.is_finite());
        let a = xi.abs();
        if a <= self.flat_cutoff {
            1.0
        } else if a < self.support_cutoff {
            self.support_cutoff - a
        } else {
            0.0
        }
    }
}

/// K(u) with input validation.
pub fn eval_kernel(u: f64) -> Result<f64, KernelError> {
    if !u.is_finite() {
        return Err(KernelError::NonFiniteInput(u));
    }
    Ok(FlatTopKernel::default().value(u))
}

/// dK/du with input validation.
pub fn eval_kernel_deriv(u: f64) -> Result<f64, KernelError> {
    if !u.is_finite() {
        return Err(KernelError::NonFiniteInput(u));
    }
    Ok(FlatTopKernel::default().deriv(u))
}

/// K^FT(xi) with input validation.
pub fn kernel_ft(xi: f64) -> Result<f64, KernelError> {
    if !xi.is_finite() {
        return Err(KernelError::NonFiniteInput(xi));
    }
    Ok(FlatTopKernel::default().ft(xi))
}

/// (kappa_2, kappa_bar) = (integral of K^2, sup K).
pub fn kernel_constants() -> (f64, f64) {
    (KAPPA2, KAPPA_BAR)
}
