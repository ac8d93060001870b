//! Parameter estimation from monthly housing-market series: moment
//! matching of the activity level, autoregressive maximum likelihood for
//! the mean-reverting model and a logistic regression for relocations.

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand_distr::Binomial;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::housing::{Distribution, HousingModel, Marginal};
use crate::numerics::substream;
use crate::relocation::{IntensityParams, MONTH};
use crate::scalar::logistic;

/// One month of housing-market data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HmObservation {
    pub month: String,
    /// Transactions as a fraction of the housing stock over the month.
    pub h_frac: f64,
    /// Fraction of borrowers relocating over the month.
    pub p_frac: f64,
    /// Borrowers at risk, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exposures: Option<u64>,
}

impl HmObservation {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.h_frac) || !(0.0..=1.0).contains(&self.p_frac) {
            return Err(crate::error::invalid(format!("fractions outside [0, 1] in month {}", self.month)));
        }
        Ok(())
    }

    /// Annualized activity `h_frac / dt`.
    pub fn activity(&self) -> f64 {
        self.h_frac / MONTH
    }
}

fn validate_all(obs: &[HmObservation]) -> Result<()> {
    obs.iter().try_for_each(HmObservation::validate)
}

/// Sample mean and unbiased variance of the annualized activity, turned
/// into a marginal of the requested family.
pub fn moment_fit(obs: &[HmObservation], distribution: Distribution) -> Result<Marginal> {
    if obs.len() < 2 {
        return Err(crate::error::invalid("moment fit needs at least two observations"));
    }
    validate_all(obs)?;
    let h: Vec<f64> = obs.iter().map(HmObservation::activity).collect();
    let n = h.len() as f64;
    let mean = h.iter().sum::<f64>() / n;
    let mut variance = h.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    // round-off from the monthly rescaling of a constant series
    if variance <= (4.0 * f64::EPSILON * mean).powi(2) {
        variance = 0.0;
    }
    if variance == 0.0 && distribution != Distribution::Normal {
        return Err(crate::error::invalid("zero sample variance admits only the normal family"));
    }
    Marginal::new(distribution, mean, variance)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OuFit {
    pub alpha: f64,
    pub eta: f64,
    pub theta: f64,
    /// Monthly autoregressive coefficient.
    pub rho: f64,
    pub innovation_variance: f64,
    /// Set when `alpha dt` is so large that consecutive months are nearly
    /// independent and only `eta^2 / (2 alpha)` is identified.
    pub weakly_identified: bool,
}

/// `alpha dt` above which the fit is flagged.
pub const WEAK_IDENTIFICATION: f64 = 3.0;

/// Exact-discretization maximum likelihood for a flat-level OU process
/// sampled monthly.
pub fn ou_mle(obs: &[HmObservation]) -> Result<OuFit> {
    if obs.len() < 3 {
        return Err(crate::error::invalid("OU fit needs at least three observations"));
    }
    validate_all(obs)?;
    let h: Vec<f64> = obs.iter().map(HmObservation::activity).collect();
    ou_mle_series(&h, MONTH)
}

pub fn ou_mle_series(h: &[f64], dt: f64) -> Result<OuFit> {
    let (x, y) = (&h[..h.len() - 1], &h[1..]);
    let m = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / m, y.iter().sum::<f64>() / m);
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let rho = sxy / sxx;
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::NotMeanReverting(rho));
    }
    let c = my - rho * mx;
    let innovation_variance = x.iter().zip(y).map(|(a, b)| (b - c - rho * a).powi(2)).sum::<f64>() / m;
    let alpha = -rho.ln() / dt;
    let eta = (innovation_variance * 2.0 * alpha / (1.0 - rho * rho)).sqrt();
    Ok(OuFit {
        alpha,
        eta,
        theta: c / (1.0 - rho),
        rho,
        innovation_variance,
        weakly_identified: alpha * dt > WEAK_IDENTIFICATION,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogisticFit {
    /// Annual-activity coefficients.
    pub beta: [f64; 3],
    pub std_err: [f64; 3],
    /// Coefficients on the monthly fraction.
    pub beta_monthly: [f64; 3],
    pub iterations: usize,
    pub gradient_norm: f64,
    pub log_likelihood: f64,
    /// Log-likelihood after every iteration.
    pub trace: Vec<f64>,
}

impl LogisticFit {
    pub fn params(&self) -> IntensityParams {
        IntensityParams { beta: self.beta, dt_ref: MONTH, ..Default::default() }
    }

    /// Two-sided normal confidence interval for coefficient `i`.
    pub fn interval(&self, i: usize, z: f64) -> (f64, f64) {
        (self.beta[i] - z * self.std_err[i], self.beta[i] + z * self.std_err[i])
    }
}

pub const MAX_IRLS_ITERATIONS: usize = 200;
pub const GRADIENT_TOL: f64 = 1e-10;

/// Damped Newton (IRLS) on the binomial log-likelihood of
/// `logit p = b0 + b1 h_frac + b2 h_frac^2`, rescaled to annual activity.
///
/// Rows with exposure counts contribute binomially; without counts every
/// month is a unit-weight quasi-Bernoulli observation of its fraction.
pub fn logistic_intensity_fit(obs: &[HmObservation]) -> Result<LogisticFit> {
    if obs.len() < 10 {
        return Err(crate::error::invalid("logistic fit needs at least ten observations"));
    }
    validate_all(obs)?;
    let weights: Vec<f64> = obs.iter().map(|o| o.exposures.map_or(1.0, |e| e as f64)).collect();
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(crate::error::invalid("no borrowers at risk"));
    }
    let events: f64 = obs.iter().zip(&weights).map(|(o, w)| o.p_frac * w).sum();
    if events <= 0.0 || events >= total {
        return Err(Error::Separation);
    }
    // centred and scaled basis keeps the normal equations well conditioned
    let xs: Vec<f64> = obs.iter().map(|o| o.h_frac).collect();
    let c = xs.iter().sum::<f64>() / xs.len() as f64;
    let s = (xs.iter().map(|x| (x - c).powi(2)).sum::<f64>() / xs.len() as f64).sqrt().max(1e-12);
    let basis: Vec<Vector3<f64>> = xs.iter().map(|x| {
        let u = (x - c) / s;
        Vector3::new(1.0, u, u * u)
    }).collect();
    let loglik = |g: &Vector3<f64>| -> f64 {
        obs.iter().zip(&basis).zip(&weights).map(|((o, b), w)| {
            let z = g.dot(b);
            // log p = -softplus(-z), log(1 - p) = -softplus(z)
            -w * (o.p_frac * softplus(-z) + (1.0 - o.p_frac) * softplus(z))
        }).sum()
    };
    let score_info = |g: &Vector3<f64>| -> (Vector3<f64>, Matrix3<f64>) {
        let mut grad = Vector3::zeros();
        let mut info = Matrix3::zeros();
        for ((o, b), w) in obs.iter().zip(&basis).zip(&weights) {
            let p = logistic(g.dot(b));
            grad += b * (w * (o.p_frac - p));
            info += b * b.transpose() * (w * p * (1.0 - p));
        }
        (grad, info)
    };
    let p0 = events / total;
    let mut g = Vector3::new((p0 / (1.0 - p0)).ln(), 0.0, 0.0);
    let mut ll = loglik(&g);
    let mut trace = vec![ll];
    let mut iterations = 0;
    let mut gradient_norm;
    loop {
        let (grad, info) = score_info(&g);
        gradient_norm = grad.norm() / total;
        if gradient_norm <= GRADIENT_TOL {
            break;
        }
        if iterations >= MAX_IRLS_ITERATIONS {
            if g.amax() > 50.0 {
                return Err(Error::Separation);
            }
            return Err(Error::NoConvergence { iterations, gradient_norm });
        }
        let step = info.lu().solve(&grad).ok_or(Error::Separation)?;
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let cand = g + step * t;
            let lc = loglik(&cand);
            if lc >= ll {
                g = cand;
                ll = lc;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        iterations += 1;
        trace.push(ll);
        if !accepted {
            // no ascent left at round-off level
            let (grad, _) = score_info(&g);
            gradient_norm = grad.norm() / total;
            if gradient_norm <= 1e3 * GRADIENT_TOL {
                break;
            }
            return Err(Error::NoConvergence { iterations, gradient_norm });
        }
    }
    let (_, info) = score_info(&g);
    let cov_g = info.try_inverse().ok_or(Error::Separation)?;
    // coefficients on the raw monthly fraction: beta = M gamma
    let m = Matrix3::new(
        1.0, -c / s, c * c / (s * s),
        0.0, 1.0 / s, -2.0 * c / (s * s),
        0.0, 0.0, 1.0 / (s * s),
    );
    let bm = m * g;
    let cov_m = m * cov_g * m.transpose();
    let scale = [1.0, MONTH, MONTH * MONTH];
    let beta_monthly = [bm[0], bm[1], bm[2]];
    let beta = [bm[0] * scale[0], bm[1] * scale[1], bm[2] * scale[2]];
    let std_err = [0, 1, 2].map(|i| cov_m[(i, i)].max(0.0).sqrt() * scale[i]);
    Ok(LogisticFit { beta, std_err, beta_monthly, iterations, gradient_norm, log_likelihood: ll, trace })
}

fn softplus(z: f64) -> f64 {
    crate::scalar::softplus(z)
}

/// Monthly label `offset` months after December 2012.
fn month_label(offset: usize) -> String {
    let m = 11 + offset;
    format!("{:04}-{:02}", 2012 + m / 12, m % 12 + 1)
}

/// Synthetic monthly series: activity simulated from `model`, relocations
/// drawn binomially among `borrowers` per month.
pub fn synth_generate(
    params: &IntensityParams,
    model: &HousingModel,
    months: usize,
    borrowers: u64,
    seed: u64,
) -> Result<Vec<HmObservation>> {
    if months < 12 {
        return Err(crate::error::invalid("at least twelve months are required"));
    }
    model.validate()?;
    let grid: Vec<f64> = (0..months).map(|k| k as f64 * MONTH).collect();
    let mut rng = substream(seed, 0);
    let mut h = vec![0.0; months];
    model.fill_path(&grid, &mut rng, &mut h);
    let mut out = Vec::with_capacity(months);
    for (k, &hk) in h.iter().enumerate() {
        let h_frac = (hk * MONTH).clamp(0.0, 1.0);
        let p = (params.intensity(h_frac / MONTH) * params.dt_ref).clamp(0.0, 1.0);
        let count = if borrowers == 0 { 0 } else { rng.sample(Binomial::new(borrowers, p).unwrap()) };
        let p_frac = if borrowers == 0 { p } else { count as f64 / borrowers as f64 };
        out.push(HmObservation {
            month: month_label(k),
            h_frac,
            p_frac,
            exposures: (borrowers > 0).then_some(borrowers),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationReport {
    pub observations: usize,
    pub mean: f64,
    pub variance: f64,
    pub ou: Option<OuFit>,
    pub ou_error: Option<String>,
    pub logistic: Option<LogisticFit>,
    pub logistic_error: Option<String>,
}

/// Runs every fit, keeping per-fit failures in the report.
pub fn calibrate(obs: &[HmObservation]) -> Result<CalibrationReport> {
    let marginal = moment_fit(obs, Distribution::Normal)?;
    let (ou, ou_error) = match ou_mle(obs) {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let (logistic, logistic_error) = match logistic_intensity_fit(obs) {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e.to_string())),
    };
    Ok(CalibrationReport {
        observations: obs.len(),
        mean: marginal.mean,
        variance: marginal.variance,
        ou,
        ou_error,
        logistic,
        logistic_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::housing::{OuParams, Trend, ACTIVITY_VARIANCE, MEAN_ACTIVITY};

    fn series(h: &[f64]) -> Vec<HmObservation> {
        h.iter()
            .enumerate()
            .map(|(k, &x)| HmObservation { month: month_label(k), h_frac: x * MONTH, p_frac: 0.003, exposures: None })
            .collect()
    }

    #[test]
    fn labels_roll_over_years() {
        assert_eq!(month_label(0), "2012-12");
        assert_eq!(month_label(1), "2013-01");
        assert_eq!(month_label(131), "2023-11");
    }

    #[test]
    fn constant_series_moments() {
        let m = moment_fit(&series(&[0.05; 20]), Distribution::Normal).unwrap();
        assert!((m.mean - 0.05).abs() < 1e-15 && m.variance < 1e-30);
        assert!(moment_fit(&series(&[0.05; 20]), Distribution::Lognormal).is_err());
    }

    #[test]
    fn normal_sample_moments_recovered() {
        let marg = Marginal::new(Distribution::Normal, MEAN_ACTIVITY, ACTIVITY_VARIANCE).unwrap();
        let mut rng = substream(4, 0);
        // months with negative activity cannot be observed, redraw the rare ones
        let h: Vec<f64> = (0..100_000)
            .map(|_| loop {
                let x = marg.sample(&mut rng);
                if x >= 0.0 {
                    break x;
                }
            })
            .collect();
        let m = moment_fit(&series(&h), Distribution::Normal).unwrap();
        assert!((m.mean / MEAN_ACTIVITY - 1.0).abs() < 0.01);
        assert!((m.variance / ACTIVITY_VARIANCE - 1.0).abs() < 0.05);
    }

    #[test]
    fn ou_recovery_when_identified() {
        // slow reversion relative to the sampling step
        let p = OuParams::with_trend(0.045, 0.0, 2.0, 0.02, Trend::Flat, 1.0);
        let p = OuParams { initial: 0.045, ..p };
        let grid: Vec<f64> = (0..20_000).map(|k| k as f64 * MONTH).collect();
        let mut h = vec![0.0; grid.len()];
        HousingModel::Ou(p).fill_path(&grid, &mut substream(8, 0), &mut h);
        let f = ou_mle_series(&h, MONTH).unwrap();
        assert!((f.alpha / 2.0 - 1.0).abs() < 0.1, "{f:?}");
        assert!((f.eta / 0.02 - 1.0).abs() < 0.05, "{f:?}");
        assert!((f.theta - 0.045).abs() < 1e-3);
        assert!(!f.weakly_identified);
    }

    #[test]
    fn ou_noise_free_path_has_zero_eta() {
        let h: Vec<f64> = (0..60).map(|k| 0.045 + 0.01 * (-1.5 * k as f64 * MONTH).exp()).collect();
        let f = ou_mle_series(&h, MONTH).unwrap();
        assert!(f.eta < 1e-8 && (f.alpha - 1.5).abs() < 1e-8);
    }

    #[test]
    fn white_noise_is_flagged_or_rejected() {
        let marg = Marginal::new(Distribution::Normal, MEAN_ACTIVITY, ACTIVITY_VARIANCE).unwrap();
        let mut flagged = 0;
        for seed in 0..20 {
            let mut rng = substream(seed, 0);
            let h: Vec<f64> = (0..120).map(|_| marg.sample(&mut rng)).collect();
            match ou_mle_series(&h, MONTH) {
                Ok(f) => {
                    assert!(f.weakly_identified || f.rho > 0.05);
                    flagged += f.weakly_identified as usize;
                }
                Err(Error::NotMeanReverting(_)) => flagged += 1,
                Err(e) => panic!("{e}"),
            }
        }
        assert!(flagged >= 15);
    }

    #[test]
    fn rescaling_is_exact() {
        let fit_like = IntensityParams::default();
        let bm = [fit_like.beta[0], fit_like.beta[1] / MONTH, fit_like.beta[2] / (MONTH * MONTH)];
        for hf in [0.002, 0.0037, 0.005] {
            let z = bm[0] + bm[1] * hf + bm[2] * hf * hf;
            let lam = fit_like.intensity(hf / MONTH);
            assert!((lam - logistic(z) / MONTH).abs() <= 1e-14 * lam);
        }
    }

    #[test]
    fn intercept_only_degeneration() {
        let obs: Vec<HmObservation> = (0..40)
            .map(|k| HmObservation {
                month: month_label(k),
                h_frac: 0.003 + 0.0001 * (k % 7) as f64,
                p_frac: 0.004,
                exposures: Some(5000),
            })
            .collect();
        let f = logistic_intensity_fit(&obs).unwrap();
        assert!(f.beta[1].abs() < 1e-6 && f.beta[2].abs() < 1e-6, "{f:?}");
        assert!((f.beta[0] - (0.004f64 / 0.996).ln()).abs() < 1e-9);
    }

    #[test]
    fn large_sample_recovery_and_monotone_likelihood() {
        let model = HousingModel::FlatRandom(Marginal::new(Distribution::Normal, MEAN_ACTIVITY, 4.0 * ACTIVITY_VARIANCE).unwrap());
        // fresh level every month
        let params = IntensityParams::default();
        let mut obs = Vec::new();
        for s in 0..40 {
            obs.extend(synth_generate(&params, &model, 132, 2_000_000, 100 + s).unwrap());
        }
        let f = logistic_intensity_fit(&obs).unwrap();
        assert!(f.trace.windows(2).all(|w| w[1] >= w[0]));
        for i in 0..3 {
            let (lo, hi) = f.interval(i, 4.0);
            assert!(lo <= params.beta[i] && params.beta[i] <= hi, "coef {i}: {f:?}");
        }
    }

    #[test]
    fn null_quadratic_term_covered() {
        let params = IntensityParams::new([-6.0, 20.0, 0.0], MONTH).unwrap();
        let model = HousingModel::FlatRandom(Marginal::new(Distribution::Normal, MEAN_ACTIVITY, 4.0 * ACTIVITY_VARIANCE).unwrap());
        let mut obs = Vec::new();
        for s in 0..20 {
            obs.extend(synth_generate(&params, &model, 132, 200_000, 7 + s).unwrap());
        }
        let f = logistic_intensity_fit(&obs).unwrap();
        let (lo, hi) = f.interval(2, 2.576);
        assert!(lo <= 0.0 && 0.0 <= hi, "{f:?}");
    }

    #[test]
    fn generator_law_of_large_numbers_and_determinism() {
        let params = IntensityParams::default();
        let model = HousingModel::Ou(OuParams::with_trend(MEAN_ACTIVITY, ACTIVITY_VARIANCE, 126.0, 0.115, Trend::Flat, 11.0));
        let a = synth_generate(&params, &model, 132, 10_000_000, 3).unwrap();
        assert_eq!(a, synth_generate(&params, &model, 132, 10_000_000, 3).unwrap());
        for o in &a {
            let p = params.intensity(o.activity()) * MONTH;
            let se = (p * (1.0 - p) / 1e7).sqrt();
            assert!((o.p_frac - p).abs() <= 5.0 * se);
        }
        assert!(synth_generate(&params, &model, 11, 10, 3).is_err());
    }
}
