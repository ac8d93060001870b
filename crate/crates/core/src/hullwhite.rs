//! One-factor Hull-White short-rate model fitted to a discount curve.
//!
//! The short rate is written `r(t) = x(t) + phi(t)` with `x(0) = 0` and
//! `dx = -a x dt + sigma dW`. The fit term `phi` is never materialised; bond
//! prices are reconstituted from ratios of initial discounts.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::curve::DiscountCurve;
use crate::error::{Error, Result};
use crate::numerics::substream;
use crate::scalar::{norm_cdf, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct HullWhite<F = f64> {
    pub mean_reversion: F,
    pub volatility: F,
    curve: DiscountCurve<F>,
}

/// Conditional moments of `(x, integral of x)` over one step of length `dt`,
/// starting from `x = 0`.
#[derive(Debug, Clone, Copy)]
pub struct StepMoments {
    pub decay: f64,
    pub b: f64,
    pub var_x: f64,
    pub var_integral: f64,
    pub covariance: f64,
}

impl<F: Scalar> HullWhite<F> {
    pub fn new(mean_reversion: F, volatility: F, curve: DiscountCurve<F>) -> Result<Self> {
        if !(mean_reversion > F::zero()) || !mean_reversion.is_finite() {
            return Err(crate::error::invalid("mean reversion must be positive"));
        }
        if !(volatility >= F::zero()) || !volatility.is_finite() {
            return Err(crate::error::invalid("volatility must be nonnegative"));
        }
        Ok(Self { mean_reversion, volatility, curve })
    }

    pub fn curve(&self) -> &DiscountCurve<F> {
        &self.curve
    }

    /// Same dynamics on another curve; used when bumping quotes.
    pub fn with_curve(&self, curve: DiscountCurve<F>) -> Self {
        Self { curve, ..self.clone() }
    }

    /// `B(t, s) = (1 - e^{-a(s-t)}) / a`.
    pub fn b(&self, t: F, s: F) -> F {
        let a = self.mean_reversion;
        (F::one() - (-a * (s - t)).exp()) / a
    }

    /// Variance of `x(t)` seen from `t0`.
    pub fn state_variance(&self, t: F) -> F {
        let (a, s) = (self.mean_reversion, self.volatility);
        s * s * (F::one() - (-F::lit(2.0) * a * t).exp()) / (F::lit(2.0) * a)
    }

    /// Variance of `integral_0^t x(u) du` seen from `t0`.
    pub fn integral_variance(&self, t: F) -> F {
        let (a, s) = (self.mean_reversion, self.volatility);
        let two = F::lit(2.0);
        s * s / (a * a) * (t - two * self.b(F::zero(), t) + (F::one() - (-two * a * t).exp()) / (two * a))
    }

    /// Bond price `P(t, s)` given the state `x(t)`.
    pub fn zcb_price(&self, t: F, s: F, x: F) -> Result<F> {
        if s < t {
            return Err(Error::TimeOrder { t: t.as_f64(), s: s.as_f64() });
        }
        if s == t {
            return Ok(F::one());
        }
        let ratio = self.curve.discount(t, s)?;
        let b = self.b(t, s);
        let (a, sig) = (self.mean_reversion, self.volatility);
        let e = F::one() - (-a * t).exp();
        let conv = sig * sig / (F::lit(4.0) * a) * (F::one() - (-F::lit(2.0) * a * t).exp()) * b * b
            + b * sig * sig / (F::lit(2.0) * a * a) * e * e;
        Ok(ratio * (-b * x - conv).exp())
    }

    /// Deterministic shift `phi(t)` so that `r(t) = x(t) + phi(t)`.
    pub fn phi(&self, t: F) -> F {
        let (a, s) = (self.mean_reversion, self.volatility);
        let e = F::one() - (-a * t).exp();
        self.curve.forward_rate(t) + s * s / (F::lit(2.0) * a * a) * e * e
    }

    /// Bond price `P(t, s)` given the short rate `r(t)`.
    pub fn zcb_price_from_rate(&self, t: F, s: F, r: F) -> Result<F> {
        self.zcb_price(t, s, r - self.phi(t))
    }

    /// Standard deviation of `ln P(T, S)` at `T`.
    pub fn bond_option_vol(&self, expiry: F, maturity: F) -> F {
        self.state_variance(expiry).sqrt() * self.b(expiry, maturity)
    }

    /// Time-`t0` price of a European call (`is_call`) or put expiring at
    /// `expiry` on the zero-coupon bond maturing at `maturity`, struck at
    /// `strike`.
    pub fn bond_option(&self, expiry: F, maturity: F, strike: F, is_call: bool) -> F {
        let p_t = self.curve.df(expiry);
        let p_s = self.curve.df(maturity);
        let sp = self.bond_option_vol(expiry, maturity);
        if !(sp > F::lit(1e-14)) {
            let fwd = p_s - strike * p_t;
            return if is_call { fwd.max(F::zero()) } else { (-fwd).max(F::zero()) };
        }
        let h = (p_s / (p_t * strike)).ln() / sp + sp * F::lit(0.5);
        if is_call {
            p_s * norm_cdf(h) - strike * p_t * norm_cdf(h - sp)
        } else {
            strike * p_t * norm_cdf(sp - h) - p_s * norm_cdf(-h)
        }
    }
}

impl HullWhite<f64> {
    pub fn step_moments(&self, dt: f64) -> StepMoments {
        let (a, s) = (self.mean_reversion, self.volatility);
        let decay = (-a * dt).exp();
        let b = (1.0 - decay) / a;
        let var_x = s * s * (1.0 - decay * decay) / (2.0 * a);
        let var_integral = s * s / (a * a) * (dt - 2.0 * b + (1.0 - decay * decay) / (2.0 * a));
        let covariance = s * s / (2.0 * a * a) * (1.0 - decay) * (1.0 - decay);
        StepMoments { decay, b, var_x, var_integral, covariance }
    }

    /// Exact joint draw of `(x(t + dt), integral_t^{t+dt} x du)` given `x(t)`.
    pub fn sample_step<R: Rng + ?Sized>(&self, m: &StepMoments, x: f64, rng: &mut R) -> (f64, f64) {
        let z1: f64 = rng.sample(StandardNormal);
        let z2: f64 = rng.sample(StandardNormal);
        let sd_x = m.var_x.sqrt();
        let (dx, di) = if sd_x > 0.0 {
            let beta = m.covariance / sd_x;
            let resid = (m.var_integral - beta * beta).max(0.0).sqrt();
            (sd_x * z1, beta * z1 + resid * z2)
        } else {
            (0.0, 0.0)
        };
        (m.decay * x + dx, m.b * x + di)
    }

    /// Pathwise `D(t0, t)` from the integrated state `I(t) = integral_0^t x`.
    pub fn discount_factor(&self, t: f64, integral_x: f64) -> f64 {
        self.curve.df(t) * (-0.5 * self.integral_variance(t) - integral_x).exp()
    }

    /// Simulates short-rate paths on `grid` (which must start at 0).
    pub fn simulate_short_rate(&self, grid: &[f64], n_paths: usize, seed: u64) -> Result<ShortRatePaths> {
        if grid.is_empty() {
            return Err(crate::error::invalid("empty simulation grid"));
        }
        if n_paths == 0 {
            return Err(crate::error::invalid("at least one path is required"));
        }
        if grid[0] != 0.0 {
            return Err(crate::error::invalid("simulation grid must start at t0 = 0"));
        }
        if grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(crate::error::invalid("simulation grid must be strictly increasing"));
        }
        let steps: Vec<StepMoments> = grid.windows(2).map(|w| self.step_moments(w[1] - w[0])).collect();
        let base_rate: Vec<f64> = grid.iter().map(|&t| self.phi(t)).collect();
        let base_integral: Vec<f64> =
            grid.iter().map(|&t| -self.curve.log_discount(t) + 0.5 * self.integral_variance(t)).collect();
        let n = grid.len();
        let paths: Vec<(Vec<f64>, Vec<f64>)> = (0..n_paths)
            .into_par_iter()
            .map(|p| {
                let mut rng = substream(seed, p as u64);
                let mut rate = Vec::with_capacity(n);
                let mut integral = Vec::with_capacity(n);
                let (mut x, mut ix) = (0.0, 0.0);
                rate.push(base_rate[0]);
                integral.push(0.0);
                for (k, m) in steps.iter().enumerate() {
                    let (xn, di) = self.sample_step(m, x, &mut rng);
                    x = xn;
                    ix += di;
                    rate.push(x + base_rate[k + 1]);
                    integral.push(ix + base_integral[k + 1]);
                }
                (rate, integral)
            })
            .collect();
        let mut short_rate = Vec::with_capacity(n * n_paths);
        let mut integrated = Vec::with_capacity(n * n_paths);
        for (r, i) in paths {
            short_rate.extend(r);
            integrated.extend(i);
        }
        Ok(ShortRatePaths { times: grid.to_vec(), n_paths, short_rate, integrated })
    }
}

/// Simulated short rates and accumulated `integral r`, path-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ShortRatePaths {
    pub times: Vec<f64>,
    pub n_paths: usize,
    pub short_rate: Vec<f64>,
    pub integrated: Vec<f64>,
}

impl ShortRatePaths {
    pub fn rate(&self, path: usize, k: usize) -> f64 {
        self.short_rate[path * self.times.len() + k]
    }

    pub fn integrated_rate(&self, path: usize, k: usize) -> f64 {
        self.integrated[path * self.times.len() + k]
    }

    /// Pathwise discount factor `exp(-integral_0^{t_k} r)`.
    pub fn discount(&self, path: usize, k: usize) -> f64 {
        (-self.integrated_rate(path, k)).exp()
    }
}
