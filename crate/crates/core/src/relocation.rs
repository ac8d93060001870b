//! Relocation as the first jump of a Cox process whose intensity is a
//! logistic function of a quadratic in housing-market activity.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::housing::{HousingModel, HousingScenario};
use crate::numerics::{par_accumulate, substream};
use crate::scalar::{logistic, softplus, Scalar};

/// Calibrated annual-coordinate coefficients.
pub const BETA_STAR: [f64; 3] = [-7.50, 54.18, -326.86];
pub const MONTH: f64 = 1.0 / 12.0;

/// Map from the per-period relocation probability `p` to an intensity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntensityMapping {
    /// `lambda = p / dt`.
    #[default]
    Linear,
    /// `lambda = -ln(1 - p) / dt`.
    Cloglog,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntensityParams<F = f64> {
    pub beta: [F; 3],
    pub dt_ref: F,
    #[serde(default)]
    pub mapping: IntensityMapping,
}

impl Default for IntensityParams<f64> {
    fn default() -> Self {
        Self { beta: BETA_STAR, dt_ref: MONTH, mapping: IntensityMapping::Linear }
    }
}

impl<F: Scalar> IntensityParams<F> {
    pub fn new(beta: [F; 3], dt_ref: F) -> Result<Self> {
        if beta.iter().any(|b| !b.is_finite()) || !(dt_ref > F::zero()) {
            return Err(crate::error::invalid("intensity coefficients must be finite and dt_ref positive"));
        }
        Ok(Self { beta, dt_ref, mapping: IntensityMapping::Linear })
    }

    fn argument(&self, h: F) -> F {
        self.beta[0] + self.beta[1] * h + self.beta[2] * h * h
    }

    pub fn intensity(&self, h: F) -> F {
        let z = self.argument(h);
        match self.mapping {
            IntensityMapping::Linear => logistic(z) / self.dt_ref,
            IntensityMapping::Cloglog => softplus(z) / self.dt_ref,
        }
    }

    /// `(lambda, dlambda/dh, d2lambda/dh2)`.
    pub fn derivatives(&self, h: F) -> (F, F, F) {
        let z = self.argument(h);
        let dz = self.beta[1] + F::lit(2.0) * self.beta[2] * h;
        let d2z = F::lit(2.0) * self.beta[2];
        let p = logistic(z);
        let q = F::one() - p;
        match self.mapping {
            IntensityMapping::Linear => {
                let s1 = p * q;
                let s2 = s1 * (F::one() - F::lit(2.0) * p);
                (p / self.dt_ref, s1 * dz / self.dt_ref, (s2 * dz * dz + s1 * d2z) / self.dt_ref)
            }
            IntensityMapping::Cloglog => {
                let s1 = p;
                let s2 = p * q;
                (softplus(z) / self.dt_ref, s1 * dz / self.dt_ref, (s2 * dz * dz + s1 * d2z) / self.dt_ref)
            }
        }
    }

    /// Activity level of maximal intensity, `-beta1 / (2 beta2)`.
    pub fn peak_activity(&self) -> Option<F> {
        if self.beta[2] < F::zero() {
            Some(-self.beta[1] / (F::lit(2.0) * self.beta[2]))
        } else {
            None
        }
    }
}

const GL4: [(f64, f64); 4] = [
    (-0.861_136_311_594_052_6, 0.347_854_845_137_453_8),
    (-0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
    (0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
    (0.861_136_311_594_052_6, 0.347_854_845_137_453_8),
];

/// Intensity, trapezoidal cumulative hazard and density along one path.
#[derive(Debug, Clone, PartialEq)]
pub struct RealizedDensity<F = f64> {
    pub times: Vec<F>,
    pub intensity: Vec<F>,
    pub cumulative_hazard: Vec<F>,
    pub density: Vec<F>,
}

impl<F: Scalar> RealizedDensity<F> {
    pub fn new(params: &IntensityParams<F>, times: &[F], activity: &[F]) -> Result<Self> {
        if times.is_empty() || times.len() != activity.len() {
            return Err(crate::error::invalid("activity path must match its time grid"));
        }
        let intensity: Vec<F> = activity.iter().map(|&h| params.intensity(h)).collect();
        Ok(Self::from_intensity(times, intensity))
    }

    pub fn from_intensity(times: &[F], intensity: Vec<F>) -> Self {
        let half = F::lit(0.5);
        let mut cumulative_hazard = Vec::with_capacity(times.len());
        let mut acc = F::zero();
        cumulative_hazard.push(acc);
        for k in 1..times.len() {
            acc = acc + half * (intensity[k - 1] + intensity[k]) * (times[k] - times[k - 1]);
            cumulative_hazard.push(acc);
        }
        let density = intensity.iter().zip(&cumulative_hazard).map(|(&l, &c)| l * (-c).exp()).collect();
        Self { times: times.to_vec(), intensity, cumulative_hazard, density }
    }

    pub fn survival(&self, k: usize) -> F {
        (-self.cumulative_hazard[k]).exp()
    }

    fn locate(&self, t: F) -> Result<usize> {
        let (start, end) = (self.times[0], *self.times.last().unwrap());
        if t < start || t > end {
            return Err(Error::OutsideGrid { t: t.as_f64(), start: start.as_f64(), end: end.as_f64() });
        }
        let i = self.times.partition_point(|&s| s <= t);
        Ok(i.saturating_sub(1).min(self.times.len().saturating_sub(2)))
    }

    /// Intensity and cumulative hazard at `t`, with the intensity linear
    /// between grid points (which is what the trapezoid integrates exactly).
    pub fn hazard_at(&self, t: F) -> Result<(F, F)> {
        if self.times.len() == 1 {
            return if t == self.times[0] {
                Ok((self.intensity[0], F::zero()))
            } else {
                Err(Error::OutsideGrid { t: t.as_f64(), start: self.times[0].as_f64(), end: self.times[0].as_f64() })
            };
        }
        let k = self.locate(t)?;
        let dt = self.times[k + 1] - self.times[k];
        let u = t - self.times[k];
        let slope = (self.intensity[k + 1] - self.intensity[k]) / dt;
        let lam = self.intensity[k] + slope * u;
        let cum = self.cumulative_hazard[k] + self.intensity[k] * u + F::lit(0.5) * slope * u * u;
        Ok((lam, cum))
    }

    pub fn density_at(&self, t: F) -> Result<F> {
        let (l, c) = self.hazard_at(t)?;
        Ok(l * (-c).exp())
    }

    /// `integral_{t0}^{t_k} f` by four-point Gauss-Legendre on every interval
    /// of the continuous density.
    pub fn mass(&self, k: usize) -> F {
        let half = F::lit(0.5);
        let mut total = F::zero();
        for i in 0..k {
            let dt = self.times[i + 1] - self.times[i];
            let slope = (self.intensity[i + 1] - self.intensity[i]) / dt;
            for &(x, w) in &GL4 {
                let u = half * dt * (F::lit(x) + F::one());
                let lam = self.intensity[i] + slope * u;
                let cum = self.cumulative_hazard[i] + self.intensity[i] * u + half * slope * u * u;
                total = total + half * dt * F::lit(w) * lam * (-cum).exp();
            }
        }
        total
    }
}

/// `lambda(h(T)) exp(-integral lambda)` on one scenario.
pub fn realized_density(params: &IntensityParams, scenario: &HousingScenario, t: f64) -> Result<f64> {
    RealizedDensity::new(params, &scenario.times, &scenario.values)?.density_at(t)
}

/// How the expectation over housing scenarios is taken.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DensityMode {
    /// Gauss quadrature over the level of a flat random model.
    Quadrature { points: usize },
    /// Equal-weight average over seeded scenarios.
    MonteCarlo { scenarios: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelocationDensityResult {
    pub times: Vec<f64>,
    pub expected_density: Vec<f64>,
    /// Standard error per grid point; zero under quadrature.
    pub std_err: Vec<f64>,
    /// Expected survival per grid point.
    pub survival: Vec<f64>,
    /// Expected `integral_{t0}^{T*} f`.
    pub mass: f64,
}

impl RelocationDensityResult {
    pub fn survival_at_end(&self) -> f64 {
        *self.survival.last().unwrap()
    }
}

pub fn expected_density(
    params: &IntensityParams,
    model: &HousingModel,
    grid: &[f64],
    mode: DensityMode,
) -> Result<RelocationDensityResult> {
    model.validate()?;
    if grid.len() < 2 || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(crate::error::invalid("density grid must be strictly increasing with two or more points"));
    }
    let m = grid.len();
    match mode {
        DensityMode::Quadrature { points } => {
            let HousingModel::FlatRandom(marginal) = model else {
                return Err(Error::QuadratureUnsupported);
            };
            let nodes = marginal.quadrature(points);
            let mut dens = vec![0.0; m];
            let mut surv = vec![0.0; m];
            let mut mass = 0.0;
            for &(h, w) in &nodes {
                let lam = params.intensity(h);
                for k in 0..m {
                    let s = (-lam * (grid[k] - grid[0])).exp();
                    dens[k] += w * lam * s;
                    surv[k] += w * s;
                }
                let flat = RealizedDensity::from_intensity(grid, vec![lam; m]);
                mass += w * flat.mass(m - 1);
            }
            Ok(RelocationDensityResult {
                times: grid.to_vec(),
                expected_density: dens,
                std_err: vec![0.0; m],
                survival: surv,
                mass,
            })
        }
        DensityMode::MonteCarlo { scenarios, seed } => {
            if scenarios == 0 {
                return Err(crate::error::invalid("at least one scenario is required"));
            }
            // layout: density, density^2, survival, then mass
            let acc = par_accumulate(scenarios, 3 * m + 1, |i, acc| {
                let mut rng = substream(seed, i as u64);
                let mut h = vec![0.0; m];
                model.fill_path(grid, &mut rng, &mut h);
                let rd = RealizedDensity::new(params, grid, &h).expect("grid and path lengths agree");
                for k in 0..m {
                    acc[k] += rd.density[k];
                    acc[m + k] += rd.density[k] * rd.density[k];
                    acc[2 * m + k] += rd.survival(k);
                }
                acc[3 * m] += rd.mass(m - 1);
            });
            let n = scenarios as f64;
            let dens: Vec<f64> = acc[..m].iter().map(|s| s / n).collect();
            let std_err = (0..m)
                .map(|k| {
                    if scenarios < 2 {
                        return 0.0;
                    }
                    let var = (acc[m + k] - n * dens[k] * dens[k]).max(0.0) / (n - 1.0);
                    (var / n).sqrt()
                })
                .collect();
            Ok(RelocationDensityResult {
                times: grid.to_vec(),
                expected_density: dens,
                std_err,
                survival: acc[2 * m..3 * m].iter().map(|s| s / n).collect(),
                mass: acc[3 * m] / n,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::housing::{Distribution, Marginal, OuParams, Trend, ACTIVITY_VARIANCE, MEAN_ACTIVITY, OU_ALPHA, OU_ETA};

    fn grid(step: f64, end: f64) -> Vec<f64> {
        let n = (end / step).round() as usize;
        (0..=n).map(|k| k as f64 * step).collect()
    }

    #[test]
    fn calibrated_intensity_level_and_peak() {
        let p = IntensityParams::default();
        let direct = 12.0 / (1.0 + (7.50 - 54.18 * 0.0447 + 326.86 * 0.0447 * 0.0447_f64).exp());
        assert!((p.intensity(0.0447) - direct).abs() < 1e-15);
        assert!((p.intensity(0.0447) - 0.0388).abs() < 5e-4);
        let peak = p.peak_activity().unwrap();
        assert!((peak - 0.0829).abs() < 1e-4);
        assert!(p.intensity(peak) > p.intensity(peak - 0.01));
        assert!(p.intensity(peak) > p.intensity(peak + 0.01));
        let tiny = IntensityParams::new([-800.0, 0.0, 0.0], MONTH).unwrap();
        assert!(tiny.intensity(0.05) < 1e-300);
    }

    #[test]
    fn intensity_derivatives_match_differences() {
        for mapping in [IntensityMapping::Linear, IntensityMapping::Cloglog] {
            let p = IntensityParams { mapping, ..IntensityParams::default() };
            for h in [-0.02, 0.0447, 0.09, 0.2] {
                let e = 1e-5;
                let (_, d1, d2) = p.derivatives(h);
                let fd1 = (p.intensity(h + e) - p.intensity(h - e)) / (2.0 * e);
                let fd2 = (p.intensity(h + e) - 2.0 * p.intensity(h) + p.intensity(h - e)) / (e * e);
                assert!((d1 - fd1).abs() <= 1e-7 * d1.abs().max(1.0));
                assert!((d2 - fd2).abs() <= 1e-3 * d2.abs().max(1.0), "{mapping:?} {h} {d2} {fd2}");
            }
        }
    }

    #[test]
    fn constant_intensity_closed_form() {
        let g = grid(0.25, 10.0);
        let rd = RealizedDensity::from_intensity(&g, vec![0.05; g.len()]);
        assert!((rd.density_at(10.0).unwrap() - 0.05 * (-0.5_f64).exp()).abs() < 1e-15);
        assert_eq!(rd.density_at(0.0).unwrap(), 0.05);
        assert!(rd.density_at(10.5).is_err());
    }

    #[test]
    fn density_normalizes_on_extended_grid() {
        let g = grid(0.5, 2000.0);
        let p = IntensityParams::default();
        let h: Vec<f64> = g.iter().map(|t| 0.0447 + 0.01 * (t * 0.7).sin()).collect();
        let rd = RealizedDensity::new(&p, &g, &h).unwrap();
        assert!((rd.mass(g.len() - 1) - 1.0).abs() < 1e-8);
        for k in [10, 500, 3999] {
            assert!((rd.mass(k) + rd.survival(k) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn density_bounded_by_intensity_cap() {
        let p = IntensityParams::new([30.0, 0.0, 0.0], MONTH).unwrap();
        let g = grid(1.0 / 48.0, 2.0);
        let rd = RealizedDensity::new(&p, &g, &vec![0.05; g.len()]).unwrap();
        assert!(rd.density.iter().all(|&f| f <= 12.0));
    }

    #[test]
    fn degenerate_variance_gives_mean_path_density() {
        let p = IntensityParams::default();
        let g = grid(1.0 / 48.0, 10.0);
        let model = HousingModel::FlatRandom(Marginal::new(Distribution::Normal, MEAN_ACTIVITY, 0.0).unwrap());
        let r = expected_density(&p, &model, &g, DensityMode::Quadrature { points: 64 }).unwrap();
        let mean = RealizedDensity::new(&p, &g, &model.mean_path(&g).values).unwrap();
        for k in 0..g.len() {
            assert!((r.expected_density[k] - mean.density[k]).abs() < 1e-15);
        }
    }

    #[test]
    fn quadrature_matches_monte_carlo_and_shows_jensen_gap() {
        let p = IntensityParams::default();
        let g = grid(0.25, 10.0);
        let model =
            HousingModel::FlatRandom(Marginal::new(Distribution::Normal, MEAN_ACTIVITY, ACTIVITY_VARIANCE).unwrap());
        let q = expected_density(&p, &model, &g, DensityMode::Quadrature { points: 64 }).unwrap();
        let mc = expected_density(&p, &model, &g, DensityMode::MonteCarlo { scenarios: 1_000_000, seed: 17 }).unwrap();
        for k in 0..g.len() {
            assert!((q.expected_density[k] - mc.expected_density[k]).abs() <= 3.5 * mc.std_err[k], "k={k}");
        }
        let mean = RealizedDensity::new(&p, &g, &model.mean_path(&g).values).unwrap();
        assert!((0..g.len()).any(|k| (q.expected_density[k] - mean.density[k]).abs() > 1e-6));
        assert!((q.mass + q.survival_at_end() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn ou_expected_density_normalizes() {
        let p = IntensityParams::default();
        let g = grid(1.0 / 48.0, 10.0);
        let model = HousingModel::Ou(OuParams::with_trend(MEAN_ACTIVITY, ACTIVITY_VARIANCE, OU_ALPHA, OU_ETA, Trend::Flat, 10.0));
        let r = expected_density(&p, &model, &g, DensityMode::MonteCarlo { scenarios: 2000, seed: 3 }).unwrap();
        assert!((r.mass + r.survival_at_end() - 1.0).abs() < 1e-10);
        assert!(matches!(
            expected_density(&p, &model, &g, DensityMode::Quadrature { points: 8 }),
            Err(Error::QuadratureUnsupported)
        ));
    }

    #[test]
    fn single_precision_intensity() {
        let p32 = IntensityParams::new([-7.5_f32, 54.18, -326.86], 1.0 / 12.0).unwrap();
        let p64 = IntensityParams::default();
        assert!((p32.intensity(0.0447) as f64 - p64.intensity(0.0447)).abs() < 1e-6);
    }
}
