//! Scalar abstraction for the analytic pricing stack.
//!
//! Curves, the Hull-White bond formulas, swap algebra, the relocation
//! intensity and the density Hessian are written once against [`Scalar`] and
//! instantiated for `f64` (the default everywhere) or `f32`.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar usable by the generic pricing code.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Sum + Send + Sync + 'static
{
    /// Converts an `f64` literal or configuration value.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar convertible to f64")
    }

    /// Tolerance floor for iterative solvers: `1e-14` in double precision,
    /// a few ulps of unit scale otherwise.
    #[inline]
    fn solver_tol() -> Self {
        Self::lit(1e-14).max(Self::epsilon() * Self::lit(16.0))
    }
}

impl Scalar for f64 {}
impl Scalar for f32 {}

/// Standard normal cumulative distribution function.
pub fn norm_cdf<F: Scalar>(x: F) -> F {
    let v = x.as_f64();
    F::lit(0.5 * libm::erfc(-v / std::f64::consts::SQRT_2))
}

/// Standard normal density.
pub fn norm_pdf<F: Scalar>(x: F) -> F {
    let v = x.as_f64();
    F::lit((-0.5 * v * v).exp() / (2.0 * std::f64::consts::PI).sqrt())
}

/// Numerically stable logistic function `1 / (1 + e^{-z})`.
#[inline]
pub fn logistic<F: Scalar>(z: F) -> F {
    if z >= F::zero() {
        F::one() / (F::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (F::one() + e)
    }
}

/// `ln(1 + e^z)` without overflow.
#[inline]
pub fn softplus<F: Scalar>(z: F) -> F {
    if z > F::zero() {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdf_symmetry_and_known_values() {
        assert!((norm_cdf(0.0_f64) - 0.5).abs() < 1e-16);
        let v = norm_cdf(1.96_f64);
        assert!((v - 0.975_002_104_851_779_5).abs() < 1e-14, "{v:.17}");
        assert!((norm_cdf(-1.0_f64) + norm_cdf(1.0_f64) - 1.0).abs() < 1e-15);
        assert!((norm_cdf(1.0_f32) - 0.841_344_7).abs() < 1e-6);
    }

    #[test]
    fn logistic_is_stable_in_both_tails() {
        assert_eq!(logistic(-800.0_f64), 0.0);
        assert_eq!(logistic(800.0_f64), 1.0);
        assert!((logistic(0.0_f64) - 0.5).abs() < 1e-16);
        assert!((softplus(50.0_f64) - 50.0).abs() < 1e-15);
        assert!((softplus(-50.0_f64) - (-50.0_f64).exp()).abs() < 1e-30);
    }
}
