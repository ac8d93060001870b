//! Valuation of the prepayment option exercised at relocation: the
//! expected-density integral of swaption prices, per-scenario values, the
//! mean-path baseline and its second-order adjustment.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::housing::HousingModel;
use crate::hullwhite::HullWhite;
use crate::instruments::{AmortizingSwap, Side};
use crate::numerics::{pairwise_sum, quantile, substream};
use crate::relocation::{expected_density, DensityMode, IntensityParams, RealizedDensity, RelocationDensityResult};
use crate::scalar::Scalar;

/// Smallest maturity grid accepted for pricing.
pub const MIN_GRID_POINTS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    /// Largest spacing between maturities.
    pub max_step: f64,
    /// Fewest maturities in the grid.
    pub min_points: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { max_step: 1.0 / 48.0, min_points: 200 }
    }
}

/// Maturity grid over `[0, T*]` made of Simpson panels that never straddle
/// a payment date.
#[derive(Debug, Clone, PartialEq)]
pub struct MaturityGrid {
    pub times: Vec<f64>,
    /// First node of every panel; panel `p` spans nodes `a, a+1, a+2`.
    panels: Vec<usize>,
    /// Simpson weights applied to right limits of the integrand.
    pub w_plus: Vec<f64>,
    /// Simpson weights applied to left limits of the integrand.
    pub w_minus: Vec<f64>,
}

impl MaturityGrid {
    pub fn new(horizon: f64, breaks: &[f64], spec: GridSpec) -> Result<Self> {
        if !(horizon > 0.0) {
            return Err(crate::error::invalid("horizon must be positive"));
        }
        if !(spec.max_step > 0.0) {
            return Err(crate::error::invalid("grid step must be positive"));
        }
        let mut knots = vec![0.0];
        for &b in breaks {
            if b > 1e-12 && b < horizon - 1e-12 && b > *knots.last().unwrap() + 1e-12 {
                knots.push(b);
            }
        }
        knots.push(horizon);
        let mut step = spec.max_step;
        loop {
            let mut times = vec![0.0];
            let mut panels = Vec::new();
            for w in knots.windows(2) {
                let len = w[1] - w[0];
                let mut n = (len / step - 1e-9).ceil().max(1.0) as usize;
                if n % 2 == 1 {
                    n += 1;
                }
                for i in 1..=n {
                    if i % 2 == 1 {
                        panels.push(times.len() - 1);
                    }
                    times.push(if i == n { w[1] } else { w[0] + len * i as f64 / n as f64 });
                }
            }
            if times.len() >= spec.min_points.max(MIN_GRID_POINTS) {
                let mut g = Self { times, panels, w_plus: Vec::new(), w_minus: Vec::new() };
                let (wp, wm) = g.range_weights(0.0, horizon);
                g.w_plus = wp;
                g.w_minus = wm;
                return Ok(g);
            }
            step *= 0.5;
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }

    /// Weights integrating a function over `[lo, hi]` from its values at the
    /// nodes: quadratic interpolation inside every panel, right limits at a
    /// panel's first node and left limits at its last node.
    pub fn range_weights(&self, lo: f64, hi: f64) -> (Vec<f64>, Vec<f64>) {
        let n = self.times.len();
        let mut wp = vec![0.0; n];
        let mut wm = vec![0.0; n];
        let anti = |s: f64| -> [f64; 3] {
            let s2 = s * s;
            let s3 = s2 * s;
            [s3 / 6.0 - 0.75 * s2 + s, -s3 / 3.0 + s2, s3 / 6.0 - 0.25 * s2]
        };
        for &a in &self.panels {
            let (x0, x2) = (self.times[a], self.times[a + 2]);
            let u = lo.max(x0);
            let v = hi.min(x2);
            if v <= u {
                continue;
            }
            let h = 0.5 * (x2 - x0);
            let (au, av) = (anti((u - x0) / h), anti((v - x0) / h));
            wp[a] += h * (av[0] - au[0]);
            // the midpoint is interior, both limits coincide
            wp[a + 1] += 0.5 * h * (av[1] - au[1]);
            wm[a + 1] += 0.5 * h * (av[1] - au[1]);
            wm[a + 2] += h * (av[2] - au[2]);
        }
        (wp, wm)
    }

    /// Simpson weights for functions continuous across payment dates.
    pub fn weights(&self) -> Vec<f64> {
        self.w_plus.iter().zip(&self.w_minus).map(|(a, b)| a + b).collect()
    }
}

/// Swaption prices per maturity, as right and left limits.
#[derive(Debug, Clone, PartialEq)]
pub struct ExerciseValues {
    pub plus: Vec<f64>,
    pub minus: Vec<f64>,
}

pub fn exercise_values(hw: &HullWhite, swap: &AmortizingSwap, grid: &MaturityGrid) -> Result<ExerciseValues> {
    let end = swap.end();
    let dates = swap.payment_dates();
    let pairs: Result<Vec<(f64, f64)>> = grid
        .times
        .par_iter()
        .enumerate()
        .map(|(k, &t)| {
            let plus = if t < end { swap.receiver_swaption(hw, t, Side::Right)? } else { 0.0 };
            let on_date = dates.iter().any(|&d| (d - t).abs() <= 1e-12);
            let minus = if grid.w_minus[k] == 0.0 || t > end {
                plus
            } else if on_date {
                swap.receiver_swaption(hw, t, Side::Left)?
            } else {
                plus
            };
            Ok((plus, minus))
        })
        .collect();
    let (plus, minus) = pairs?.into_iter().unzip();
    Ok(ExerciseValues { plus, minus })
}

/// Value distribution and its decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct EporValuation {
    pub value: f64,
    pub baseline: f64,
    pub adjustment: f64,
    pub scenario_values: Vec<f64>,
    pub quantile_band: (f64, f64),
    pub integrand: Vec<IntegrandPoint>,
    pub notional: f64,
}

impl EporValuation {
    pub fn bps(&self, v: f64) -> f64 {
        v / self.notional * 1e4
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrandPoint {
    pub maturity: f64,
    pub swaption: f64,
    pub density: f64,
    pub integrand: f64,
}

/// Everything needed to value the option on one curve.
#[derive(Debug, Clone)]
pub struct Epor {
    pub hw: HullWhite,
    pub swap: AmortizingSwap,
    pub intensity: IntensityParams,
    pub grid: MaturityGrid,
    pub exercise: ExerciseValues,
    effective: Vec<f64>,
}

impl Epor {
    pub fn new(
        hw: HullWhite,
        swap: AmortizingSwap,
        intensity: IntensityParams,
        horizon: f64,
        spec: GridSpec,
    ) -> Result<Self> {
        if spec.min_points < MIN_GRID_POINTS {
            return Err(Error::GridTooCoarse { points: spec.min_points, min: MIN_GRID_POINTS });
        }
        let grid = MaturityGrid::new(horizon, swap.payment_dates(), spec)?;
        let exercise = exercise_values(&hw, &swap, &grid)?;
        let effective = effective_weights(&grid.w_plus, &grid.w_minus, &exercise);
        Ok(Self { hw, swap, intensity, grid, exercise, effective })
    }

    /// Same option with a different rate model or curve on the same grid.
    pub fn reprice(&self, hw: HullWhite) -> Result<Self> {
        let exercise = exercise_values(&hw, &self.swap, &self.grid)?;
        let effective = effective_weights(&self.grid.w_plus, &self.grid.w_minus, &exercise);
        Ok(Self { hw, exercise, effective, ..self.clone() })
    }

    pub fn with_swap(&self, swap: AmortizingSwap) -> Result<Self> {
        let exercise = exercise_values(&self.hw, &swap, &self.grid)?;
        let effective = effective_weights(&self.grid.w_plus, &self.grid.w_minus, &exercise);
        Ok(Self { swap, exercise, effective, ..self.clone() })
    }

    pub fn notional(&self) -> f64 {
        self.swap.initial_notional()
    }

    pub fn to_bps(&self, v: f64) -> f64 {
        v / self.notional() * 1e4
    }

    /// Per-maturity weights `w+ C+ + w- C-` that turn a density into a value.
    pub fn effective_weights(&self) -> &[f64] {
        &self.effective
    }

    /// Effective weights for the relocation mass falling in `[lo, hi]`.
    pub fn range_effective_weights(&self, lo: f64, hi: f64) -> Vec<f64> {
        let (wp, wm) = self.grid.range_weights(lo, hi);
        effective_weights(&wp, &wm, &self.exercise)
    }

    fn check_grid(&self, times: &[f64]) -> Result<()> {
        if times.len() != self.grid.len() || times.iter().zip(&self.grid.times).any(|(a, b)| (a - b).abs() > 1e-12) {
            return Err(crate::error::invalid("density grid differs from the maturity grid"));
        }
        Ok(())
    }

    /// `integral C(T) f(T) dT` for an expected density on this grid.
    pub fn price(&self, density: &RelocationDensityResult) -> Result<f64> {
        self.check_grid(&density.times)?;
        Ok(dot(&self.effective, &density.expected_density))
    }

    pub fn expected_density(&self, model: &HousingModel, mode: DensityMode) -> Result<RelocationDensityResult> {
        expected_density(&self.intensity, model, &self.grid.times, mode)
    }

    /// Value given one activity path on the grid.
    pub fn scenario_value(&self, activity: &[f64]) -> Result<f64> {
        let rd = RealizedDensity::new(&self.intensity, &self.grid.times, activity)?;
        Ok(dot(&self.effective, &rd.density))
    }

    /// Realized densities of scenarios `0..n` of the `seed` family.
    pub fn scenario_densities(&self, model: &HousingModel, n: usize, seed: u64) -> Vec<Vec<f64>> {
        let grid = &self.grid.times;
        (0..n as u64)
            .into_par_iter()
            .map(|i| {
                let mut rng = substream(seed, i);
                let mut h = vec![0.0; grid.len()];
                model.fill_path(grid, &mut rng, &mut h);
                RealizedDensity::new(&self.intensity, grid, &h).unwrap().density
            })
            .collect()
    }

    pub fn scenario_values(&self, model: &HousingModel, n: usize, seed: u64) -> Result<Vec<f64>> {
        model.validate()?;
        if n == 0 {
            return Err(crate::error::invalid("at least one scenario is required"));
        }
        let grid = &self.grid.times;
        Ok((0..n as u64)
            .into_par_iter()
            .map(|i| {
                let mut rng = substream(seed, i);
                let mut h = vec![0.0; grid.len()];
                model.fill_path(grid, &mut rng, &mut h);
                self.scenario_value(&h).unwrap()
            })
            .collect())
    }

    /// Value on the mean activity path.
    pub fn baseline(&self, model: &HousingModel) -> Result<f64> {
        self.scenario_value(&model.mean_path(&self.grid.times).values)
    }

    /// Second-order correction `1/2 integral C(T) <Cov, H_T>` around the mean path.
    pub fn adjustment(&self, model: &HousingModel) -> Result<f64> {
        let q = adjustment_density(&self.intensity, model, &self.grid.times)?;
        Ok(0.5 * dot(&self.effective, &q))
    }

    pub fn valuation(&self, model: &HousingModel, mode: DensityMode, scenarios: usize, seed: u64) -> Result<EporValuation> {
        let density = self.expected_density(model, mode)?;
        let value = self.price(&density)?;
        let scenario_values = self.scenario_values(model, scenarios, seed)?;
        let mut sorted = scenario_values.clone();
        sorted.sort_by(|a, b| a.total_cmp(b));
        let quantile_band = (quantile(&sorted, 0.1), quantile(&sorted, 0.9));
        let integrand = self
            .grid
            .times
            .iter()
            .enumerate()
            .map(|(k, &t)| {
                let c = self.exercise.plus[k];
                let f = density.expected_density[k];
                IntegrandPoint { maturity: t, swaption: c, density: f, integrand: c * f }
            })
            .collect();
        Ok(EporValuation {
            value,
            baseline: self.baseline(model)?,
            adjustment: self.adjustment(model)?,
            scenario_values,
            quantile_band,
            integrand,
            notional: self.notional(),
        })
    }
}

fn effective_weights(wp: &[f64], wm: &[f64], ex: &ExerciseValues) -> Vec<f64> {
    (0..wp.len()).map(|k| wp[k] * ex.plus[k] + wm[k] * ex.minus[k]).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let prods: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
    pairwise_sum(&prods)
}

/// `Q_K = sum_ij H^K_ij Cov(h_i, h_j)` for every node `K`, where `H^K` is the
/// discrete Hessian of the density at node `K` around the mean path.
pub fn adjustment_density(params: &IntensityParams, model: &HousingModel, times: &[f64]) -> Result<Vec<f64>> {
    let m = times.len();
    let mean = model.mean_path(times).values;
    let rd = RealizedDensity::new(params, times, &mean)?;
    let derivs: Vec<(f64, f64, f64)> = mean.iter().map(|&h| params.derivatives(h)).collect();
    let cov: Vec<f64> = (0..m * m).map(|idx| model.covariance(times[idx / m], times[idx % m])).collect();
    let c = |i: usize, j: usize| cov[i * m + j];

    // running a = lambda' * trapezoid weights up to K, v = Cov a, s = a' Cov a
    let mut v = vec![0.0; m];
    let mut s = 0.0;
    let mut diag = 0.0;
    let mut out = Vec::with_capacity(m);
    let add = |p: usize, delta: f64, v: &mut Vec<f64>, s: &mut f64| {
        *s += 2.0 * delta * v[p] + delta * delta * c(p, p);
        for (i, vi) in v.iter_mut().enumerate() {
            *vi += delta * c(i, p);
        }
    };
    for k in 0..m {
        if k > 0 {
            let dt = times[k] - times[k - 1];
            add(k - 1, 0.5 * dt * derivs[k - 1].1, &mut v, &mut s);
            add(k, 0.5 * dt * derivs[k].1, &mut v, &mut s);
            diag += 0.5 * dt * (derivs[k - 1].2 * c(k - 1, k - 1) + derivs[k].2 * c(k, k));
        }
        let (l, l1, l2) = derivs[k];
        out.push(rd.density[k] * (s - 2.0 * l1 / l * v[k] - diag + l2 / l * c(k, k)));
    }
    Ok(out)
}

/// Hessian of the realized density at node `k` with respect to the
/// activity values at every node, around a reference path.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteHessian<F = f64> {
    pub times: Vec<F>,
    pub k: usize,
    pub density: F,
    n: usize,
    matrix: Vec<F>,
}

impl<F: Scalar> DiscreteHessian<F> {
    pub fn get(&self, i: usize, j: usize) -> F {
        self.matrix[i * self.n + j]
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }

    pub fn double_sum(&self) -> F {
        self.matrix.iter().copied().sum()
    }

    /// `sum_ij H_ij C_ij`.
    pub fn contract<C: Fn(usize, usize) -> F>(&self, cov: C) -> F {
        let mut acc = F::zero();
        for i in 0..self.n {
            for j in 0..self.n {
                acc = acc + self.get(i, j) * cov(i, j);
            }
        }
        acc
    }
}

/// Discrete Hessian with trapezoid hazard weights on an arbitrary grid.
pub fn discrete_hessian<F: Scalar>(
    params: &IntensityParams<F>,
    times: &[F],
    activity: &[F],
    k: usize,
) -> Result<DiscreteHessian<F>> {
    if times.len() != activity.len() || k >= times.len() {
        return Err(crate::error::invalid("hessian node outside the reference path"));
    }
    let n = k + 1;
    let half = F::lit(0.5);
    let omega: Vec<F> = (0..n)
        .map(|i| {
            let left = if i > 0 { times[i] - times[i - 1] } else { F::zero() };
            let right = if i < k { times[i + 1] - times[i] } else { F::zero() };
            half * (left + right)
        })
        .collect();
    let d: Vec<(F, F, F)> = activity[..n].iter().map(|&h| params.derivatives(h)).collect();
    let sigma1: Vec<F> = (0..n).map(|i| d[i].1 * omega[i]).collect();
    let rd = RealizedDensity::new(params, &times[..n], &activity[..n])?;
    let f = rd.density[k];
    let (l, l1, l2) = d[k];
    let mut matrix = vec![F::zero(); n * n];
    for i in 0..n {
        for j in 0..n {
            let mut v = sigma1[i] * sigma1[j];
            if i == k {
                v = v - sigma1[j] * l1 / l;
            }
            if j == k {
                v = v - sigma1[i] * l1 / l;
            }
            if i == j {
                v = v - d[i].2 * omega[i];
                if i == k {
                    v = v + l2 / l;
                }
            }
            matrix[i * n + j] = f * v;
        }
    }
    Ok(DiscreteHessian { times: times[..n].to_vec(), k, density: f, n, matrix })
}

/// Discrete Hessian on the uniform grid `t_i = t0 + i dt`, `i = 0..=k`.
pub fn discrete_hessian_uniform<F: Scalar>(
    params: &IntensityParams<F>,
    t0: F,
    dt: F,
    activity: &[F],
    k: usize,
) -> Result<DiscreteHessian<F>> {
    if k < 8 {
        return Err(crate::error::invalid("at least eight steps are required"));
    }
    let times: Vec<F> = (0..=k).map(|i| t0 + dt * F::lit(i as f64)).collect();
    discrete_hessian(params, &times, &activity[..=k], k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::flat_par_curve;
    use crate::housing::{Distribution, Marginal, OuParams, Trend, ACTIVITY_VARIANCE, MEAN_ACTIVITY};

    fn epor(kind: &str, k: f64) -> Epor {
        let curve = flat_par_curve(0.03, &[1.0, 3.0, 5.0, 7.0, 10.0]).unwrap();
        let hw = HullWhite::new(0.05, 0.01, curve).unwrap();
        let swap = match kind {
            "bullet" => AmortizingSwap::bullet(10.0, 1, k, 10_000.0).unwrap(),
            _ => AmortizingSwap::linear(10.0, 1, k, 10_000.0).unwrap(),
        };
        Epor::new(hw, swap, IntensityParams::default(), 10.0, GridSpec::default()).unwrap()
    }

    fn flat_normal(variance: f64) -> HousingModel {
        HousingModel::FlatRandom(Marginal::new(Distribution::Normal, MEAN_ACTIVITY, variance).unwrap())
    }

    #[test]
    fn grid_layout() {
        let g = MaturityGrid::new(10.0, &(1..=10).map(f64::from).collect::<Vec<_>>(), GridSpec::default()).unwrap();
        assert_eq!(g.len(), 481);
        let w: f64 = g.weights().iter().sum();
        assert!((w - 10.0).abs() < 1e-12);
        // simpson integrates cubics exactly, also over partial ranges
        let f = |t: f64| t * t * t - 2.0 * t;
        let exact = |a: f64, b: f64| (b.powi(4) - a.powi(4)) / 4.0 - (b * b - a * a);
        let (wp, wm) = g.range_weights(0.0, 10.0);
        let v: f64 = g.times.iter().enumerate().map(|(k, &t)| (wp[k] + wm[k]) * f(t)).sum();
        assert!((v - exact(0.0, 10.0)).abs() < 1e-9);
        let (wp, wm) = g.range_weights(2.3, 7.77);
        let v: f64 = g.times.iter().enumerate().map(|(k, &t)| (wp[k] + wm[k]) * (t * t - t)).sum();
        let ex = (7.77_f64.powi(3) - 2.3_f64.powi(3)) / 3.0 - (7.77_f64.powi(2) - 2.3_f64.powi(2)) / 2.0;
        assert!((v - ex).abs() < 1e-12);
        assert!(MaturityGrid::new(10.0, &[], GridSpec { max_step: 5.0, min_points: 0 }).unwrap().len() >= 16);
    }

    #[test]
    fn scenario_mean_equals_price() {
        let e = epor("bullet", 0.03);
        let model = HousingModel::Ou(OuParams::with_trend(MEAN_ACTIVITY, ACTIVITY_VARIANCE, 126.0, 0.115, Trend::Increasing, 10.0));
        let d = e.expected_density(&model, DensityMode::MonteCarlo { scenarios: 3000, seed: 5 }).unwrap();
        let v = e.price(&d).unwrap();
        let vs = e.scenario_values(&model, 3000, 5).unwrap();
        let mean = pairwise_sum(&vs) / vs.len() as f64;
        assert!((mean - v).abs() <= 1e-12 * v);
    }

    #[test]
    fn bullet_above_linear_and_deep_otm_small() {
        let model = flat_normal(ACTIVITY_VARIANCE);
        let mode = DensityMode::Quadrature { points: 64 };
        let vb = epor("bullet", 0.03);
        let vl = epor("linear", 0.03);
        let pb = vb.price(&vb.expected_density(&model, mode).unwrap()).unwrap();
        let pl = vl.price(&vl.expected_density(&model, mode).unwrap()).unwrap();
        assert!(pb > pl && pl > 0.0);
        let sd = vb.hw.state_variance(10.0).sqrt();
        let deep = vb.with_swap(vb.swap.with_fixed_rate(0.03 - 6.0 * sd)).unwrap();
        let p = deep.price(&deep.expected_density(&model, mode).unwrap()).unwrap();
        assert!(deep.to_bps(p) <= 0.01);
    }

    #[test]
    fn zero_intensity_is_worthless() {
        let mut e = epor("bullet", 0.03);
        e.intensity = IntensityParams::new([-800.0, 0.0, 0.0], 1.0 / 12.0).unwrap();
        let model = flat_normal(ACTIVITY_VARIANCE);
        let d = e.expected_density(&model, DensityMode::Quadrature { points: 16 }).unwrap();
        assert_eq!(e.price(&d).unwrap(), 0.0);
    }

    #[test]
    fn mean_path_scenario_is_baseline() {
        let e = epor("linear", 0.03);
        let model = flat_normal(0.0);
        let v = e.price(&e.expected_density(&model, DensityMode::Quadrature { points: 8 }).unwrap()).unwrap();
        assert_eq!(v, e.baseline(&model).unwrap());
        assert_eq!(e.adjustment(&model).unwrap(), 0.0);
    }

    #[test]
    fn flat_adjustment_is_half_variance_times_curvature() {
        let e = epor("bullet", 0.03);
        let g = |h: f64| e.scenario_value(&vec![h; e.grid.len()]).unwrap();
        let (h, eps) = (MEAN_ACTIVITY, 1e-4);
        let d2 = |e: f64| (g(h + e) - 2.0 * g(h) + g(h - e)) / (e * e);
        let curv = (4.0 * d2(0.5 * eps) - d2(eps)) / 3.0;
        let nu = e.adjustment(&flat_normal(ACTIVITY_VARIANCE)).unwrap();
        assert!((nu - 0.5 * ACTIVITY_VARIANCE * curv).abs() <= 1e-5 * nu.abs(), "{nu} vs {}", 0.5 * ACTIVITY_VARIANCE * curv);
    }

    #[test]
    fn incremental_contraction_matches_explicit_hessian() {
        let p = IntensityParams::default();
        let times: Vec<f64> = (0..=30).map(|k| k as f64 * 0.2).collect();
        let model = HousingModel::Ou(OuParams::with_trend(0.04, 1e-4, 3.0, 0.05, Trend::Decreasing, 6.0));
        let q = adjustment_density(&p, &model, &times).unwrap();
        let mean = model.mean_path(&times).values;
        for k in [0, 1, 7, 30] {
            let h = discrete_hessian(&p, &times, &mean, k).unwrap();
            let explicit = h.contract(|i, j| model.covariance(times[i], times[j]));
            assert!((explicit - q[k]).abs() <= 1e-12 * explicit.abs().max(1e-12), "k={k}");
        }
    }

    #[test]
    fn hessian_symmetric_and_matches_finite_differences() {
        let p = IntensityParams::default();
        let k = 40;
        let dt = 0.25;
        let h: Vec<f64> = (0..=k).map(|i| 0.045 + 0.01 * (i as f64 * 0.3).sin()).collect();
        let hess = discrete_hessian_uniform(&p, 0.0, dt, &h, k).unwrap();
        assert!(hess.is_symmetric());
        let times: Vec<f64> = (0..=k).map(|i| i as f64 * dt).collect();
        let f = |x: &[f64]| *RealizedDensity::new(&p, &times, x).unwrap().density.last().unwrap();
        let step = 1e-4;
        let mixed = |i: usize, j: usize, e: f64| {
            let bump = |si: f64, sj: f64| {
                let mut x = h.clone();
                x[i] += si;
                x[j] += sj;
                f(&x)
            };
            if i == j {
                (bump(e, 0.0) - 2.0 * f(&h) + bump(-e, 0.0)) / (e * e)
            } else {
                (bump(e, e) - bump(e, -e) - bump(-e, e) + bump(-e, -e)) / (4.0 * e * e)
            }
        };
        for &(i, j) in &[(0, 0), (3, 17), (40, 40), (40, 12), (25, 25), (39, 40)] {
            let fd = (4.0 * mixed(i, j, 0.5 * step) - mixed(i, j, step)) / 3.0;
            let an = hess.get(i, j);
            assert!((fd - an).abs() <= 1e-4 * an.abs(), "({i},{j}) {fd} vs {an}");
        }
    }

    #[test]
    fn single_precision_hessian() {
        let p = IntensityParams::new([-7.5_f32, 54.18, -326.86], 1.0 / 12.0).unwrap();
        let h = vec![0.0447_f32; 11];
        let hess = discrete_hessian_uniform(&p, 0.0, 0.5, &h, 10).unwrap();
        let p64 = IntensityParams::default();
        let h64 = vec![0.0447; 11];
        let hess64 = discrete_hessian_uniform(&p64, 0.0, 0.5, &h64, 10).unwrap();
        assert!(((hess.double_sum() as f64) / hess64.double_sum() - 1.0).abs() < 1e-3);
    }
}
