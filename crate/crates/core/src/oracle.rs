//! Brute-force Monte-Carlo pricer: rates, housing activity and the
//! relocation threshold are simulated jointly and the swap is exercised
//! pathwise at the relocation time.

use rand_distr::{Distribution as _, Exp1};
use rayon::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::epor::{GridSpec, MaturityGrid};
use crate::error::Result;
use crate::housing::HousingModel;
use crate::hullwhite::HullWhite;
use crate::instruments::{AmortizingSwap, Side};
use crate::numerics::{mean_and_se, substream};
use crate::relocation::{IntensityParams, RealizedDensity};

/// Hazard accumulated over one grid step above which the step is flagged.
pub const HAZARD_STEP_WARNING: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleConfig {
    pub paths: usize,
    pub seed: u64,
    pub grid_step: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self { paths: 1_000_000, seed: 7, grid_step: 1.0 / 48.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleEstimate {
    pub price: f64,
    pub std_err: f64,
    pub n_paths: usize,
    /// Fraction of paths relocating before the horizon.
    pub exercise_fraction: f64,
    pub max_hazard_step: f64,
    pub warnings: Vec<String>,
}

/// Inputs shared by the oracle routines.
#[derive(Debug, Clone)]
pub struct Oracle<'a> {
    pub hw: &'a HullWhite,
    pub swap: &'a AmortizingSwap,
    pub model: &'a HousingModel,
    pub intensity: &'a IntensityParams,
    pub horizon: f64,
}

// independent generator families per path
const RATE: u64 = 0;
const HOUSING: u64 = 1;
const THRESHOLD: u64 = 2;

fn stream(seed: u64, path: usize, family: u64) -> rand_chacha::ChaCha8Rng {
    substream(seed, 3 * path as u64 + family)
}

/// First time the piecewise-linear cumulative hazard reaches `level`.
pub fn first_passage(times: &[f64], cumulative: &[f64], level: f64) -> Option<f64> {
    let k = cumulative.partition_point(|&c| c < level);
    if k == 0 {
        return Some(times[0]);
    }
    if k >= cumulative.len() {
        return None;
    }
    let (c0, c1) = (cumulative[k - 1], cumulative[k]);
    Some(times[k - 1] + (level - c0) / (c1 - c0) * (times[k] - times[k - 1]))
}

/// Survival `exp(-Lambda(t))` with the cumulative hazard linear between nodes.
pub fn interpolated_survival(times: &[f64], cumulative: &[f64], t: f64) -> f64 {
    let k = times.partition_point(|&s| s <= t);
    if k == 0 {
        return 1.0;
    }
    if k >= times.len() {
        return (-cumulative[times.len() - 1]).exp();
    }
    let u = (t - times[k - 1]) / (times[k] - times[k - 1]);
    (-(cumulative[k - 1] + u * (cumulative[k] - cumulative[k - 1]))).exp()
}

struct PathDraw {
    tau: Option<f64>,
    max_step: f64,
}

impl<'a> Oracle<'a> {
    pub fn grid(&self, step: f64) -> Result<Vec<f64>> {
        Ok(MaturityGrid::new(self.horizon, self.swap.payment_dates(), GridSpec { max_step: step, min_points: 16 })?
            .times)
    }

    fn relocation(&self, grid: &[f64], seed: u64, path: usize, h: &mut [f64]) -> PathDraw {
        let mut rng = stream(seed, path, HOUSING);
        self.model.fill_path(grid, &mut rng, h);
        let rd = RealizedDensity::new(self.intensity, grid, h).unwrap();
        let max_step = rd.cumulative_hazard.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
        let e: f64 = Exp1.sample(&mut stream(seed, path, THRESHOLD));
        let tau = first_passage(grid, &rd.cumulative_hazard, e).filter(|&t| t <= self.horizon);
        PathDraw { tau, max_step }
    }

    /// Discounted payoff `D(t0, tau) S(tau, K)^+` on one path.
    fn payoff(&self, tau: f64, seed: u64, path: usize) -> Result<f64> {
        if tau >= self.swap.end() {
            return Ok(0.0);
        }
        let mut rng = stream(seed, path, RATE);
        let m = self.hw.step_moments(tau);
        let (x, ix) = self.hw.sample_step(&m, 0.0, &mut rng);
        let s = self.swap.legs_in_state(self.hw, tau, x, Side::Right)?.value;
        Ok(self.hw.discount_factor(tau, ix) * s.max(0.0))
    }

    pub fn price(&self, cfg: OracleConfig) -> Result<OracleEstimate> {
        self.model.validate()?;
        if cfg.paths < 2 {
            return Err(crate::error::invalid("the oracle needs at least two paths"));
        }
        let grid = self.grid(cfg.grid_step)?;
        let draws: Vec<Result<(f64, bool, f64)>> = (0..cfg.paths)
            .into_par_iter()
            .map_init(
                || vec![0.0; grid.len()],
                |h, p| {
                    let d = self.relocation(&grid, cfg.seed, p, h);
                    let v = match d.tau {
                        Some(t) => self.payoff(t, cfg.seed, p)?,
                        None => 0.0,
                    };
                    Ok((v, d.tau.is_some(), d.max_step))
                },
            )
            .collect();
        let mut values = Vec::with_capacity(cfg.paths);
        let mut exercised = 0usize;
        let mut max_hazard_step: f64 = 0.0;
        for d in draws {
            let (v, ex, step) = d?;
            values.push(v);
            exercised += ex as usize;
            max_hazard_step = max_hazard_step.max(step);
        }
        let (price, std_err) = mean_and_se(&values);
        let mut warnings = Vec::new();
        if max_hazard_step > HAZARD_STEP_WARNING {
            warnings.push(format!(
                "hazard accumulated over one grid step reaches {max_hazard_step:.3}; refine oracle.grid_step"
            ));
        }
        Ok(OracleEstimate {
            price,
            std_err,
            n_paths: cfg.paths,
            exercise_fraction: exercised as f64 / cfg.paths as f64,
            max_hazard_step,
            warnings,
        })
    }

    /// Pathwise exposures at `probes` split into the four regions.
    pub fn exposure_decomposition(&self, probes: &[f64], cfg: OracleConfig) -> Result<ExposureDecomposition> {
        self.model.validate()?;
        if probes.iter().any(|&t| !(0.0..=self.horizon).contains(&t)) {
            return Err(crate::error::invalid("probe dates must lie within the valuation horizon"));
        }
        let mut probes = probes.to_vec();
        probes.sort_by(|a, b| a.total_cmp(b));
        let grid = self.grid(cfg.grid_step)?;
        let k = self.swap.fixed_rate;
        let rows: Result<Vec<Vec<ExposureRecord>>> = (0..cfg.paths)
            .into_par_iter()
            .map_init(
                || vec![0.0; grid.len()],
                |h, p| {
                    let tau = self.relocation(&grid, cfg.seed, p, h).tau;
                    // exact state at every event date in time order
                    let mut events: Vec<f64> = probes.clone();
                    if let Some(t) = tau {
                        events.push(t);
                    }
                    events.sort_by(|a, b| a.total_cmp(b));
                    let mut rng = stream(cfg.seed, p, RATE);
                    let (mut t, mut x) = (0.0, 0.0);
                    let mut states = Vec::with_capacity(events.len());
                    for &e in &events {
                        if e > t {
                            let (xn, _) = self.hw.sample_step(&self.hw.step_moments(e - t), x, &mut rng);
                            x = xn;
                            t = e;
                        }
                        states.push((e, x));
                    }
                    let state_at = |s: f64| states.iter().find(|(e, _)| *e == s).map(|&(_, x)| x).unwrap();
                    let kappa_tau = match tau {
                        Some(t) if t < self.swap.end() => {
                            Some(self.swap.legs_in_state(self.hw, t, state_at(t), Side::Right)?.swap_rate)
                        }
                        _ => None,
                    };
                    let mut out = Vec::with_capacity(probes.len());
                    for (i, &tp) in probes.iter().enumerate() {
                        let region = match tau {
                            None => Region::NoRelocation,
                            Some(t) if tp < t => Region::BeforeRelocation,
                            Some(_) => match kappa_tau {
                                Some(kt) if kt < k => Region::Prepayment,
                                _ => Region::Porting,
                            },
                        };
                        let (s, y, z) = if tp >= self.swap.end() {
                            (0.0, 0.0, 0.0)
                        } else {
                            let legs = self.swap.legs_in_state(self.hw, tp, state_at(tp), Side::Right)?;
                            let s = legs.value;
                            if region == Region::Prepayment {
                                let kt = kappa_tau.unwrap();
                                let y = legs.annuity * (kt - legs.swap_rate);
                                (s, y, legs.annuity * (k - kt))
                            } else {
                                (s, s, 0.0)
                            }
                        };
                        out.push(ExposureRecord { path: p, probe: i, maturity: tp, region, s, y, z });
                    }
                    Ok(out)
                },
            )
            .collect();
        let records: Vec<ExposureRecord> = rows?.into_iter().flatten().collect();
        let max_identity_residual = records.iter().map(|r| (r.s - r.y - r.z).abs()).fold(0.0, f64::max);
        Ok(ExposureDecomposition { probes, n_paths: cfg.paths, records, max_identity_residual })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Region {
    NoRelocation,
    BeforeRelocation,
    Porting,
    Prepayment,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExposureRecord {
    pub path: usize,
    pub probe: usize,
    pub maturity: f64,
    pub region: Region,
    /// Contractual swap value `S(T, K)`.
    pub s: f64,
    /// Exposure once relocation behaviour is applied.
    pub y: f64,
    /// Option exposure `S - Y`.
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExposureDecomposition {
    pub probes: Vec<f64>,
    pub n_paths: usize,
    pub records: Vec<ExposureRecord>,
    pub max_identity_residual: f64,
}

impl ExposureDecomposition {
    pub fn fraction(&self, probe: usize, region: Region) -> f64 {
        let n = self.records.iter().filter(|r| r.probe == probe && r.region == region).count();
        n as f64 / self.n_paths as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GoodnessOfFit {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Chi-square test of sampled relocation times against the survival
/// function of one deterministic activity path. Bins are the intervals
/// between `edges` plus the tail beyond the last edge.
pub fn cox_goodness_of_fit(
    intensity: &IntensityParams,
    times: &[f64],
    activity: &[f64],
    edges: &[f64],
    draws: usize,
    seed: u64,
) -> Result<GoodnessOfFit> {
    if edges.len() < 2 || edges.windows(2).any(|w| w[1] <= w[0]) {
        return Err(crate::error::invalid("bin edges must be increasing"));
    }
    let rd = RealizedDensity::new(intensity, times, activity)?;
    let cum = &rd.cumulative_hazard;
    let nb = edges.len();
    let mut counts = vec![0usize; nb];
    let taus: Vec<Option<f64>> = (0..draws)
        .into_par_iter()
        .map(|i| {
            let e: f64 = Exp1.sample(&mut substream(seed, i as u64));
            first_passage(times, cum, e)
        })
        .collect();
    for tau in taus {
        let t = tau.unwrap_or(f64::INFINITY);
        if t < edges[0] {
            continue;
        }
        let b = edges.partition_point(|&e| e <= t) - 1;
        counts[b.min(nb - 1)] += 1;
    }
    let surv: Vec<f64> = edges.iter().map(|&e| interpolated_survival(times, cum, e)).collect();
    let norm = surv[0];
    let mut statistic = 0.0;
    for b in 0..nb {
        let p = if b + 1 < nb { (surv[b] - surv[b + 1]) / norm } else { surv[b] / norm };
        let expected = p * draws as f64;
        statistic += (counts[b] as f64 - expected).powi(2) / expected;
    }
    let dof = nb - 1;
    let p_value = 1.0 - ChiSquared::new(dof as f64).unwrap().cdf(statistic);
    Ok(GoodnessOfFit { statistic, dof, p_value })
}

/// Short-rate Monte-Carlo price of the receiver swaption on `swap`
/// exercisable at `t`: one exact joint draw of the state and its integral
/// per path. Returns the mean and its standard error.
pub fn swaption_mc(hw: &HullWhite, swap: &AmortizingSwap, t: f64, paths: usize, seed: u64) -> Result<(f64, f64)> {
    if paths < 2 {
        return Err(crate::error::invalid("at least two paths are required"));
    }
    swap.remaining(t, Side::Right)?;
    let mom = hw.step_moments(t);
    let pay: Result<Vec<f64>> = (0..paths as u64)
        .into_par_iter()
        .map(|p| {
            let mut rng = substream(seed, p);
            let (x, ix) = hw.sample_step(&mom, 0.0, &mut rng);
            let v = swap.legs_in_state(hw, t, x, Side::Right)?.value;
            Ok(hw.discount_factor(t, ix) * v.max(0.0))
        })
        .collect();
    Ok(mean_and_se(&pay?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::flat_par_curve;
    use crate::housing::{Distribution, Marginal, OuParams, Trend, ACTIVITY_VARIANCE, MEAN_ACTIVITY};

    fn setup(sigma: f64) -> (HullWhite, AmortizingSwap) {
        let curve = flat_par_curve(0.03, &[1.0, 3.0, 5.0, 7.0, 10.0]).unwrap();
        (HullWhite::new(0.05, sigma, curve).unwrap(), AmortizingSwap::bullet(10.0, 1, 0.03, 10_000.0).unwrap())
    }

    #[test]
    fn passage_interpolates_linearly() {
        let t = [0.0, 1.0, 2.0];
        let c = [0.0, 0.5, 1.5];
        assert_eq!(first_passage(&t, &c, 0.25), Some(0.5));
        assert_eq!(first_passage(&t, &c, 1.0), Some(1.5));
        assert_eq!(first_passage(&t, &c, 2.0), None);
        assert!((interpolated_survival(&t, &c, 1.5) - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn zero_intensity_prices_zero() {
        let (hw, swap) = setup(0.01);
        let model = HousingModel::FlatRandom(Marginal::new(Distribution::Normal, MEAN_ACTIVITY, ACTIVITY_VARIANCE).unwrap());
        let intensity = IntensityParams::new([-800.0, 0.0, 0.0], 1.0 / 12.0).unwrap();
        let o = Oracle { hw: &hw, swap: &swap, model: &model, intensity: &intensity, horizon: 10.0 };
        let est = o.price(OracleConfig { paths: 2000, seed: 1, grid_step: 0.25 }).unwrap();
        assert_eq!(est.price, 0.0);
        assert_eq!(est.exercise_fraction, 0.0);
    }

    #[test]
    fn hazard_warning_on_coarse_grid() {
        let (hw, swap) = setup(0.01);
        let model = HousingModel::FlatRandom(Marginal::new(Distribution::Normal, MEAN_ACTIVITY, 0.0).unwrap());
        let intensity = IntensityParams::new([0.0, 0.0, 0.0], 1.0 / 12.0).unwrap();
        let o = Oracle { hw: &hw, swap: &swap, model: &model, intensity: &intensity, horizon: 10.0 };
        let est = o.price(OracleConfig { paths: 100, seed: 1, grid_step: 0.5 }).unwrap();
        assert!(!est.warnings.is_empty());
    }

    #[test]
    fn deterministic_limit_matches_quadrature() {
        // sigma_r -> 0 and a deterministic activity path
        let (hw, swap) = setup(1e-9);
        let swap = swap.with_fixed_rate(0.035);
        let model = HousingModel::FlatRandom(Marginal::new(Distribution::Normal, MEAN_ACTIVITY, 0.0).unwrap());
        let intensity = IntensityParams::default();
        let o = Oracle { hw: &hw, swap: &swap, model: &model, intensity: &intensity, horizon: 10.0 };
        let est = o.price(OracleConfig { paths: 200_000, seed: 3, grid_step: 1.0 / 48.0 }).unwrap();
        let e = crate::epor::Epor::new(hw.clone(), swap.clone(), intensity, 10.0, GridSpec::default()).unwrap();
        let v = e.price(&e.expected_density(&model, crate::DensityMode::Quadrature { points: 4 }).unwrap()).unwrap();
        assert!((est.price - v).abs() <= 3.0 * est.std_err, "{} +- {} vs {v}", est.price, est.std_err);
    }

    #[test]
    fn cox_sampling_passes_chi_square() {
        let times: Vec<f64> = (0..=120).map(|k| k as f64 / 12.0).collect();
        let h: Vec<f64> = times.iter().map(|t| 0.045 + 0.01 * (t * 1.3).sin()).collect();
        let edges: Vec<f64> = (0..=10).map(f64::from).collect();
        let g = cox_goodness_of_fit(&IntensityParams::default(), &times, &h, &edges, 100_000, 11).unwrap();
        assert!(g.p_value > 0.01, "{g:?}");
    }

    #[test]
    fn rate_and_housing_draws_are_independent() {
        let (hw, swap) = setup(0.01);
        let model = HousingModel::Ou(OuParams::with_trend(MEAN_ACTIVITY, ACTIVITY_VARIANCE, 126.0, 0.115, Trend::Flat, 10.0));
        let intensity = IntensityParams::default();
        let o = Oracle { hw: &hw, swap: &swap, model: &model, intensity: &intensity, horizon: 10.0 };
        let grid = o.grid(0.25).unwrap();
        let n = 20_000;
        let pairs: Vec<(f64, f64)> = (0..n)
            .map(|p| {
                let mut h = vec![0.0; grid.len()];
                o.relocation(&grid, 5, p, &mut h);
                let m = hw.step_moments(5.0);
                let (_, ix) = hw.sample_step(&m, 0.0, &mut stream(5, p, RATE));
                (h.iter().sum::<f64>() / h.len() as f64, ix)
            })
            .collect();
        let (ma, mb) = pairs.iter().fold((0.0, 0.0), |acc, p| (acc.0 + p.0, acc.1 + p.1));
        let (ma, mb) = (ma / n as f64, mb / n as f64);
        let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
        for (a, b) in &pairs {
            sab += (a - ma) * (b - mb);
            saa += (a - ma) * (a - ma);
            sbb += (b - mb) * (b - mb);
        }
        assert!((sab / (saa * sbb).sqrt()).abs() <= 3.0 / (n as f64).sqrt());
    }

    #[test]
    fn exposure_regions_and_identity() {
        let (hw, swap) = setup(0.01);
        let model = HousingModel::FlatRandom(Marginal::new(Distribution::Normal, MEAN_ACTIVITY, ACTIVITY_VARIANCE).unwrap());
        let intensity = IntensityParams::default();
        let probes = [1.0, 2.5, 5.0, 7.5, 9.5];
        let mut prep = Vec::new();
        for k in [0.025, 0.03, 0.035] {
            let s = swap.with_fixed_rate(k);
            let o = Oracle { hw: &hw, swap: &s, model: &model, intensity: &intensity, horizon: 10.0 };
            let d = o.exposure_decomposition(&probes, OracleConfig { paths: 4000, seed: 9, grid_step: 1.0 / 12.0 }).unwrap();
            assert!(d.max_identity_residual <= 1e-9 * 10_000.0);
            for r in &d.records {
                if r.region == Region::Porting {
                    assert_eq!(r.z, 0.0);
                }
                if r.region == Region::Prepayment {
                    assert!(r.z > 0.0);
                }
            }
            prep.push(d.fraction(4, Region::Prepayment));
        }
        assert!(prep[0] < prep[1] && prep[1] < prep[2], "{prep:?}");
    }
}
