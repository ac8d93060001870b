//! Housing-market activity models `h(t)` and their scenario generators.
//!
//! Paths are not floored at zero: the relocation intensity is defined for
//! every real `h`.

use std::num::NonZeroUsize;

use gauss_quad::{laguerre::GaussLaguerre, hermite::GaussHermite, FiniteAboveNegOneF64};
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::Result;
use crate::numerics::substream;

/// Calibrated mean of annualized housing-market activity.
pub const MEAN_ACTIVITY: f64 = 4.470e-2;
/// Calibrated variance of annualized housing-market activity.
pub const ACTIVITY_VARIANCE: f64 = 1.215e-4;
pub const OU_ALPHA: f64 = 126.0;
pub const OU_ETA: f64 = 0.115;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distribution {
    Normal,
    Lognormal,
    ShiftedExponential,
}

/// A one-dimensional law for a random activity level, parameterized by its
/// mean and variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Marginal {
    pub distribution: Distribution,
    pub mean: f64,
    pub variance: f64,
}

impl Marginal {
    pub fn new(distribution: Distribution, mean: f64, variance: f64) -> Result<Self> {
        let m = Self { distribution, mean, variance };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.mean.is_finite() || !(self.variance >= 0.0) || !self.variance.is_finite() {
            return Err(crate::error::invalid("activity mean must be finite and variance nonnegative"));
        }
        if self.distribution == Distribution::Lognormal && self.mean <= 0.0 {
            return Err(crate::error::invalid("lognormal activity requires a positive mean"));
        }
        Ok(())
    }

    pub fn sd(&self) -> f64 {
        self.variance.sqrt()
    }

    /// `(mu, sigma)` of `ln h` for the lognormal law.
    pub fn log_params(&self) -> (f64, f64) {
        let s2 = (1.0 + self.variance / (self.mean * self.mean)).ln();
        (self.mean.ln() - 0.5 * s2, s2.sqrt())
    }

    /// `(shift, rate)` of the shifted exponential law.
    pub fn exp_params(&self) -> (f64, f64) {
        (self.mean - self.sd(), 1.0 / self.sd())
    }

    /// Mean and variance implied by the distribution parameters.
    pub fn implied_moments(&self) -> (f64, f64) {
        match self.distribution {
            Distribution::Normal => (self.mean, self.variance),
            Distribution::Lognormal => {
                let (m, s) = self.log_params();
                let mean = (m + 0.5 * s * s).exp();
                (mean, ((s * s).exp() - 1.0) * mean * mean)
            }
            Distribution::ShiftedExponential => {
                let (shift, rate) = self.exp_params();
                (shift + 1.0 / rate, 1.0 / (rate * rate))
            }
        }
    }

    /// Inverse CDF; `u` in `(0, 1)`.
    pub fn quantile(&self, u: f64) -> f64 {
        if self.variance == 0.0 {
            return self.mean;
        }
        match self.distribution {
            Distribution::Normal => self.mean + self.sd() * std_normal_quantile(u),
            Distribution::Lognormal => {
                let (m, s) = self.log_params();
                (m + s * std_normal_quantile(u)).exp()
            }
            Distribution::ShiftedExponential => {
                let (shift, rate) = self.exp_params();
                shift - (-u).ln_1p() / rate
            }
        }
    }

    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> f64 {
        self.quantile(open_unit(rng))
    }

    /// Nodes and weights integrating against the law: Gauss-Hermite for the
    /// normal and lognormal (in log space), Gauss-Laguerre for the shifted
    /// exponential.
    pub fn quadrature(&self, points: usize) -> Vec<(f64, f64)> {
        if self.variance == 0.0 {
            return vec![(self.mean, 1.0)];
        }
        let deg = NonZeroUsize::new(points.max(1)).unwrap();
        let sqrt_pi = std::f64::consts::PI.sqrt();
        match self.distribution {
            Distribution::Normal => GaussHermite::new(deg)
                .as_node_weight_pairs()
                .iter()
                .map(|&(x, w)| (self.mean + self.sd() * std::f64::consts::SQRT_2 * x, w / sqrt_pi))
                .collect(),
            Distribution::Lognormal => {
                let (m, s) = self.log_params();
                GaussHermite::new(deg)
                    .as_node_weight_pairs()
                    .iter()
                    .map(|&(x, w)| ((m + s * std::f64::consts::SQRT_2 * x).exp(), w / sqrt_pi))
                    .collect()
            }
            Distribution::ShiftedExponential => {
                let (shift, rate) = self.exp_params();
                GaussLaguerre::new(deg, FiniteAboveNegOneF64::new(0.0).unwrap())
                    .as_node_weight_pairs()
                    .iter()
                    .map(|&(x, w)| (shift + x / rate, w))
                    .collect()
            }
        }
    }
}

fn std_normal_quantile(u: f64) -> f64 {
    Normal::standard().inverse_cdf(u)
}

/// Uniform draw on the open interval `(0, 1)`.
pub fn open_unit<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) / (1u64 << 53) as f64
}

/// Ornstein-Uhlenbeck activity with affine long-run mean
/// `theta(t) = theta_level + theta_slope * t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OuParams {
    pub initial: f64,
    pub alpha: f64,
    pub eta: f64,
    pub theta_level: f64,
    pub theta_slope: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trend {
    #[default]
    Flat,
    Increasing,
    Decreasing,
}

impl OuParams {
    /// OU started at `mean` whose long-run mean drifts by `+-2 sd` over the
    /// horizon according to `trend`.
    pub fn with_trend(mean: f64, variance: f64, alpha: f64, eta: f64, trend: Trend, horizon: f64) -> Self {
        let slope = 2.0 * variance.sqrt() / horizon;
        let theta_slope = match trend {
            Trend::Flat => 0.0,
            Trend::Increasing => slope,
            Trend::Decreasing => -slope,
        };
        Self { initial: mean, alpha, eta, theta_level: mean, theta_slope }
    }

    pub fn theta(&self, t: f64) -> f64 {
        self.theta_level + self.theta_slope * t
    }

    pub fn mean(&self, t: f64) -> f64 {
        let e = (-self.alpha * t).exp();
        self.initial * e
            + self.theta_level * (1.0 - e)
            + self.theta_slope * (t + (-self.alpha * t).exp_m1() / self.alpha)
    }

    /// Conditional variance of one exact transition of length `dt`.
    pub fn transition_variance(&self, dt: f64) -> f64 {
        self.eta * self.eta * -(-2.0 * self.alpha * dt).exp_m1() / (2.0 * self.alpha)
    }

    pub fn stationary_variance(&self) -> f64 {
        self.eta * self.eta / (2.0 * self.alpha)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum HousingModel {
    /// Constant path at a level drawn once at `t0`.
    FlatRandom(Marginal),
    /// Linear path from the mean at `t0` to a random level at `horizon`.
    LinearRamp { terminal: Marginal, horizon: f64 },
    Ou(OuParams),
}

/// One realized activity path on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct HousingScenario {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl HousingModel {
    pub fn validate(&self) -> Result<()> {
        match self {
            HousingModel::FlatRandom(m) => m.validate(),
            HousingModel::LinearRamp { terminal, horizon } => {
                if !(*horizon > 0.0) {
                    return Err(crate::error::invalid("ramp horizon must be positive"));
                }
                terminal.validate()
            }
            HousingModel::Ou(p) => {
                if !(p.alpha > 0.0) || !(p.eta >= 0.0) {
                    return Err(crate::error::invalid("OU requires alpha > 0 and eta >= 0"));
                }
                Ok(())
            }
        }
    }

    /// Conditional mean `E[h(t)]` at `t`.
    pub fn mean_at(&self, t: f64) -> f64 {
        match self {
            HousingModel::FlatRandom(m) => m.mean,
            HousingModel::LinearRamp { terminal, .. } => terminal.mean,
            HousingModel::Ou(p) => p.mean(t),
        }
    }

    pub fn mean_path(&self, grid: &[f64]) -> HousingScenario {
        HousingScenario { times: grid.to_vec(), values: grid.iter().map(|&t| self.mean_at(t)).collect() }
    }

    /// `Cov(h(s), h(t))` seen from `t0`.
    pub fn covariance(&self, s: f64, t: f64) -> f64 {
        match self {
            HousingModel::FlatRandom(m) => m.variance,
            HousingModel::LinearRamp { terminal, horizon } => terminal.variance * s * t / (horizon * horizon),
            HousingModel::Ou(p) => {
                p.eta * p.eta / (2.0 * p.alpha) * ((-p.alpha * (t - s).abs()).exp() - (-p.alpha * (t + s)).exp())
            }
        }
    }

    /// Writes one path on `grid` into `out`.
    pub fn fill_path<R: RngCore + ?Sized>(&self, grid: &[f64], rng: &mut R, out: &mut [f64]) {
        match self {
            HousingModel::FlatRandom(m) => {
                let h = m.sample(rng);
                out.iter_mut().for_each(|v| *v = h);
            }
            HousingModel::LinearRamp { terminal, horizon } => {
                let end = terminal.sample(rng);
                for (v, &t) in out.iter_mut().zip(grid) {
                    *v = terminal.mean + (end - terminal.mean) * t / horizon;
                }
            }
            HousingModel::Ou(p) => {
                let mut prev_t = 0.0;
                let mut dev = 0.0;
                for (v, &t) in out.iter_mut().zip(grid) {
                    let dt = t - prev_t;
                    if dt > 0.0 {
                        let z: f64 = rng.sample(StandardNormal);
                        dev = dev * (-p.alpha * dt).exp() + p.transition_variance(dt).sqrt() * z;
                    }
                    *v = p.mean(t) + dev;
                    prev_t = t;
                }
            }
        }
    }

    /// Scenario `i` of the family identified by `seed`.
    pub fn scenario(&self, grid: &[f64], seed: u64, i: u64) -> HousingScenario {
        let mut rng = substream(seed, i);
        let mut values = vec![0.0; grid.len()];
        self.fill_path(grid, &mut rng, &mut values);
        HousingScenario { times: grid.to_vec(), values }
    }

    pub fn sample_scenarios(&self, grid: &[f64], n: usize, seed: u64) -> Result<Vec<HousingScenario>> {
        self.validate()?;
        if n == 0 {
            return Err(crate::error::invalid("at least one scenario is required"));
        }
        if grid.is_empty() || grid[0] < 0.0 || grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(crate::error::invalid("scenario grid must be nonnegative and strictly increasing"));
        }
        Ok((0..n as u64).into_par_iter().map(|i| self.scenario(grid, seed, i)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::mean_and_se;

    fn marginal(d: Distribution) -> Marginal {
        Marginal::new(d, MEAN_ACTIVITY, ACTIVITY_VARIANCE).unwrap()
    }

    #[test]
    fn parameterizations_reproduce_moments() {
        for d in [Distribution::Normal, Distribution::Lognormal, Distribution::ShiftedExponential] {
            let (m, v) = marginal(d).implied_moments();
            assert!((m - MEAN_ACTIVITY).abs() <= 1e-15);
            assert!((v - ACTIVITY_VARIANCE).abs() <= 1e-18);
        }
    }

    #[test]
    fn quadrature_reproduces_moments() {
        for d in [Distribution::Normal, Distribution::Lognormal, Distribution::ShiftedExponential] {
            let q = marginal(d).quadrature(64);
            let m: f64 = q.iter().map(|(h, w)| h * w).sum();
            let v: f64 = q.iter().map(|(h, w)| (h - m) * (h - m) * w).sum();
            assert!((m - MEAN_ACTIVITY).abs() < 1e-13, "{d:?}");
            assert!((v / ACTIVITY_VARIANCE - 1.0).abs() < 1e-9, "{d:?} {v}");
        }
    }

    #[test]
    fn sample_moments_converge() {
        for d in [Distribution::Normal, Distribution::Lognormal, Distribution::ShiftedExponential] {
            let m = marginal(d);
            let xs: Vec<f64> = (0..200_000).map(|i| m.sample(&mut substream(4, i))).collect();
            let (mean, se) = mean_and_se(&xs);
            assert!((mean - MEAN_ACTIVITY).abs() <= 4.0 * se);
            let sq: Vec<f64> = xs.iter().map(|x| (x - MEAN_ACTIVITY).powi(2)).collect();
            let (var, se_v) = mean_and_se(&sq);
            assert!((var - ACTIVITY_VARIANCE).abs() <= 4.0 * se_v, "{d:?}");
        }
    }

    #[test]
    fn shifted_exponential_support() {
        let m = marginal(Distribution::ShiftedExponential);
        let (shift, rate) = m.exp_params();
        assert!((shift - (MEAN_ACTIVITY - ACTIVITY_VARIANCE.sqrt())).abs() < 1e-16);
        assert!((rate - 1.0 / ACTIVITY_VARIANCE.sqrt()).abs() < 1e-9);
        assert!(m.quantile(1e-12) >= shift);
    }

    #[test]
    fn degenerate_models_follow_mean_path() {
        let grid: Vec<f64> = (0..=20).map(|k| k as f64 * 0.5).collect();
        let flat = HousingModel::FlatRandom(Marginal::new(Distribution::Normal, 0.05, 0.0).unwrap());
        let ou = HousingModel::Ou(OuParams { initial: 0.04, alpha: 2.0, eta: 0.0, theta_level: 0.05, theta_slope: 0.001 });
        for m in [flat, ou] {
            let mean = m.mean_path(&grid);
            for s in m.sample_scenarios(&grid, 5, 1).unwrap() {
                assert_eq!(s.values, mean.values);
            }
        }
    }

    #[test]
    fn ou_stationary_mean_and_variance() {
        let p = OuParams::with_trend(0.0447, ACTIVITY_VARIANCE, OU_ALPHA, OU_ETA, Trend::Flat, 10.0);
        let m = HousingModel::Ou(p);
        assert!(m.mean_path(&[0.0, 1.0, 7.0]).values.iter().all(|&v| (v - 0.0447).abs() < 1e-17));
        let dt = 1.0 / 12.0;
        assert!((p.transition_variance(dt) - p.stationary_variance()).abs() < 1e-12);
        let long = p.transition_variance(50.0);
        assert!((long - p.stationary_variance()).abs() <= 1e-15);
    }

    #[test]
    fn ou_trend_mean_matches_mc() {
        let p = OuParams::with_trend(MEAN_ACTIVITY, ACTIVITY_VARIANCE, 1.5, 0.03, Trend::Increasing, 10.0);
        let m = HousingModel::Ou(p);
        let grid: Vec<f64> = (0..=40).map(|k| k as f64 * 0.25).collect();
        let n = 100_000;
        let paths = m.sample_scenarios(&grid, n, 8).unwrap();
        for k in [4, 20, 40] {
            let xs: Vec<f64> = paths.iter().map(|s| s.values[k]).collect();
            let (mean, se) = mean_and_se(&xs);
            assert!((mean - p.mean(grid[k])).abs() <= 3.0 * se, "t={}", grid[k]);
        }
        // the mean approaches the trend line with lag 1/alpha
        let t = 10.0;
        assert!((p.mean(t) - (p.theta(t) - p.theta_slope / p.alpha)).abs() < 1e-6);
    }

    #[test]
    fn covariance_identities() {
        let flat = HousingModel::FlatRandom(marginal(Distribution::Normal));
        assert_eq!(flat.covariance(0.3, 8.0), ACTIVITY_VARIANCE);
        let ramp = HousingModel::LinearRamp { terminal: marginal(Distribution::Normal), horizon: 10.0 };
        assert!((ramp.covariance(10.0, 10.0) - ACTIVITY_VARIANCE).abs() < 1e-20);
        assert_eq!(ramp.covariance(0.0, 5.0), 0.0);
        let ou = HousingModel::Ou(OuParams::with_trend(0.04, 0.0, 3.0, 0.1, Trend::Flat, 10.0));
        let grid = [0.0, 1.0, 1.5];
        let paths = ou.sample_scenarios(&grid, 200_000, 2).unwrap();
        let prod: Vec<f64> = paths.iter().map(|s| (s.values[1] - 0.04) * (s.values[2] - 0.04)).collect();
        let (c, se) = mean_and_se(&prod);
        assert!((c - ou.covariance(1.0, 1.5)).abs() <= 3.0 * se);
    }

    #[test]
    fn scenarios_are_seed_stable() {
        let m = HousingModel::Ou(OuParams::with_trend(0.0447, 1e-4, OU_ALPHA, OU_ETA, Trend::Decreasing, 10.0));
        let grid: Vec<f64> = (0..=8).map(|k| k as f64 * 0.125).collect();
        assert_eq!(m.sample_scenarios(&grid, 10, 3).unwrap(), m.sample_scenarios(&grid, 10, 3).unwrap());
        assert!(m.sample_scenarios(&grid, 0, 3).is_err());
    }
}
