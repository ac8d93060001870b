//! Delta-Gamma replication of the option with receiver swaptions on the
//! mortgage schedule: global and range-local weights, optimal maturities and
//! ranges, the eigenvalue-penalized actuarial hedge and curve shock reports.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::epor::Epor;
use crate::error::{Error, Result};
use crate::greeks::GreekProfile;
use crate::hullwhite::HullWhite;
use crate::instruments::{calibrating_swap, AmortizingSwap, Side};
use crate::numerics::{expected_shortfall, golden_section, pairwise_sum};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HedgeConfig {
    /// Number of ranges and swaptions.
    pub ranges: usize,
    /// Gamma weight in the global and range-local objectives.
    pub k: f64,
    /// Weight of the partition-regularity penalty.
    pub k_vol: f64,
    /// Weight of the concavity penalty of the actuarial hedge.
    pub k_eig: f64,
    /// Tail level of the concavity penalty.
    pub alpha_opt: f64,
    /// Greeks enter the objectives per this many basis points.
    pub unit_bp: f64,
    pub delta_bump_bp: f64,
    pub gamma_bump_bp: f64,
    pub restarts: usize,
}

impl Default for HedgeConfig {
    fn default() -> Self {
        Self {
            ranges: 3,
            k: 1.0,
            k_vol: 0.1,
            k_eig: 3.0,
            alpha_opt: 0.1,
            unit_bp: 1.0,
            delta_bump_bp: 1.0,
            gamma_bump_bp: 5.0,
            restarts: 8,
        }
    }
}

/// Rate models on every bumped curve needed for central-difference Greeks.
#[derive(Debug, Clone)]
pub struct BumpSet {
    quotes: usize,
    delta_step: f64,
    gamma_step: f64,
    models: Vec<HullWhite>,
}

impl BumpSet {
    pub fn new(hw: &HullWhite, delta_bp: f64, gamma_bp: f64) -> Result<Self> {
        if !(delta_bp > 0.0 && gamma_bp > 0.0) {
            return Err(crate::error::invalid("bump sizes must be positive"));
        }
        let n = hw.curve().quotes().len();
        let (d, g) = (delta_bp * 1e-4, gamma_bp * 1e-4);
        let mut shifts: Vec<Vec<(usize, f64)>> = vec![vec![]];
        for i in 0..n {
            shifts.push(vec![(i, d)]);
            shifts.push(vec![(i, -d)]);
        }
        for i in 0..n {
            shifts.push(vec![(i, g)]);
            shifts.push(vec![(i, -g)]);
        }
        for i in 0..n {
            for j in i + 1..n {
                for (si, sj) in [(g, g), (g, -g), (-g, g), (-g, -g)] {
                    shifts.push(vec![(i, si), (j, sj)]);
                }
            }
        }
        let models: Result<Vec<HullWhite>> = shifts
            .par_iter()
            .map(|s| {
                if s.is_empty() {
                    return Ok(hw.clone());
                }
                let mut v = vec![0.0; n];
                for &(i, x) in s {
                    v[i] += x;
                }
                Ok(hw.with_curve(hw.curve().bump_quotes(&v)?))
            })
            .collect();
        Ok(Self { quotes: n, delta_step: d, gamma_step: g, models: models? })
    }

    pub fn base(&self) -> &HullWhite {
        &self.models[0]
    }

    pub fn quotes(&self) -> usize {
        self.quotes
    }

    /// Values on the base curve and Greeks per unit rate of every output of `f`.
    pub fn greeks<F>(&self, f: F) -> Result<(Vec<f64>, Vec<GreekProfile>)>
    where
        F: Fn(&HullWhite) -> Result<Vec<f64>> + Sync,
    {
        let vals: Result<Vec<Vec<f64>>> = self.models.par_iter().map(&f).collect();
        let vals = vals?;
        let n = self.quotes;
        let (d, g) = (self.delta_step, self.gamma_step);
        let base = vals[0].clone();
        let gd = 1 + 2 * n;
        let gc = gd + 2 * n;
        let profiles = (0..base.len())
            .map(|o| {
                let mut p = GreekProfile::zeros(n);
                for i in 0..n {
                    p.delta[i] = (vals[1 + 2 * i][o] - vals[2 + 2 * i][o]) / (2.0 * d);
                    p.gamma[(i, i)] = (vals[gd + 2 * i][o] - 2.0 * base[o] + vals[gd + 2 * i + 1][o]) / (g * g);
                }
                let mut idx = gc;
                for i in 0..n {
                    for j in i + 1..n {
                        let v = (vals[idx][o] - vals[idx + 1][o] - vals[idx + 2][o] + vals[idx + 3][o]) / (4.0 * g * g);
                        p.gamma[(i, j)] = v;
                        p.gamma[(j, i)] = v;
                        idx += 4;
                    }
                }
                p
            })
            .collect();
        Ok((base, profiles))
    }
}

/// Pricing context shared by every construction. Greeks held here are in
/// objective units: Delta per `unit_bp`, Gamma per `unit_bp` squared.
#[derive(Debug, Clone)]
pub struct HedgeContext {
    pub epor: Epor,
    pub bumps: BumpSet,
    /// Expected relocation density on the maturity grid.
    pub density: Vec<f64>,
    pub cfg: HedgeConfig,
    plus: Vec<GreekProfile>,
    minus: Vec<GreekProfile>,
}

impl HedgeContext {
    pub fn new(epor: Epor, density: Vec<f64>, cfg: HedgeConfig) -> Result<Self> {
        if density.len() != epor.grid.len() {
            return Err(crate::error::invalid("density grid differs from the maturity grid"));
        }
        let bumps = BumpSet::new(&epor.hw, cfg.delta_bump_bp, cfg.gamma_bump_bp)?;
        let m = epor.grid.len();
        let (_, g) = bumps.greeks(|hw| {
            let ex = crate::epor::exercise_values(hw, &epor.swap, &epor.grid)?;
            Ok(ex.plus.into_iter().chain(ex.minus).collect())
        })?;
        let u = cfg.unit_bp * 1e-4;
        let mut g: Vec<GreekProfile> = g.into_iter().map(|p| in_units(&p, u)).collect();
        let minus = g.split_off(m);
        Ok(Self { epor, bumps, density, cfg, plus: g, minus })
    }

    fn unit(&self) -> f64 {
        self.cfg.unit_bp * 1e-4
    }

    pub fn horizon(&self) -> f64 {
        self.epor.grid.horizon()
    }

    pub fn value(&self) -> f64 {
        self.range_value(0.0, self.horizon())
    }

    pub fn range_value(&self, lo: f64, hi: f64) -> f64 {
        dot(&self.epor.range_effective_weights(lo, hi), &self.density)
    }

    /// Greeks of `integral_lo^hi C(T) f(T) dT` for a given density.
    pub fn range_greeks_with(&self, lo: f64, hi: f64, density: &[f64]) -> GreekProfile {
        let (wp, wm) = self.epor.grid.range_weights(lo, hi);
        let mut out = GreekProfile::zeros(self.bumps.quotes());
        for k in 0..density.len() {
            if wp[k] != 0.0 {
                out.add_scaled(&self.plus[k], wp[k] * density[k]);
            }
            if wm[k] != 0.0 {
                out.add_scaled(&self.minus[k], wm[k] * density[k]);
            }
        }
        out
    }

    pub fn range_greeks(&self, lo: f64, hi: f64) -> GreekProfile {
        self.range_greeks_with(lo, hi, &self.density)
    }

    pub fn target(&self) -> GreekProfile {
        self.range_greeks(0.0, self.horizon())
    }

    /// Price and Greeks of the receiver swaption on the mortgage schedule
    /// exercisable at `t`.
    pub fn swaption(&self, t: f64) -> Result<(f64, GreekProfile)> {
        let swap = &self.epor.swap;
        let (v, g) = self.bumps.greeks(|hw| Ok(vec![swap.receiver_swaption(hw, t, Side::Right)?]))?;
        Ok((v[0], in_units(&g[0], self.unit())))
    }

    pub fn local_objective(&self, w: f64, instrument: &GreekProfile, target: &GreekProfile) -> f64 {
        let dd = &instrument.delta * w - &target.delta;
        let dg = &instrument.gamma * w - &target.gamma;
        dd.norm_squared() + self.cfg.k * dg.norm_squared()
    }

    /// Closed-form minimizer of the range-local objective; `None` when the
    /// instrument has no Greeks.
    pub fn local_weight(&self, instrument: &GreekProfile, target: &GreekProfile) -> Option<f64> {
        let k = self.cfg.k;
        let den = instrument.delta.norm_squared() + k * instrument.gamma.norm_squared();
        if den == 0.0 {
            return None;
        }
        Some((instrument.delta.dot(&target.delta) + k * instrument.gamma.dot(&target.gamma)) / den)
    }

    /// Global Delta-Gamma mismatch of a set of weighted swaption legs.
    pub fn global_objective(&self, legs: &[HedgeLeg]) -> f64 {
        let t = self.target();
        let mut total = GreekProfile::zeros(self.bumps.quotes());
        for l in legs {
            total.add_scaled(&l.greeks, l.weight);
        }
        let dd = &total.delta - &t.delta;
        let dg = &total.gamma - &t.gamma;
        dd.norm_squared() + self.cfg.k * dg.norm_squared()
    }
}

fn in_units(p: &GreekProfile, u: f64) -> GreekProfile {
    let mut q = GreekProfile { delta: &p.delta * u, gamma: &p.gamma * (u * u) };
    q.symmetrize();
    q
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let v: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
    pairwise_sum(&v)
}

/// Least-squares weights of `instruments` against a Delta-Gamma target:
/// normal equations of `||sum w dS - dV||^2 + k ||sum w GS - GV||_F^2`.
pub fn solve_global(target: &GreekProfile, instruments: &[GreekProfile], k: f64) -> Result<Vec<f64>> {
    let n = instruments.len();
    if n == 0 || instruments.iter().all(|g| g.delta.amax() == 0.0 && g.gamma.amax() == 0.0) {
        return Err(Error::DegenerateInstruments);
    }
    let mut gram = DMatrix::zeros(n, n);
    let mut rhs = DVector::zeros(n);
    for a in 0..n {
        rhs[a] = instruments[a].delta.dot(&target.delta) + k * instruments[a].gamma.dot(&target.gamma);
        for b in 0..n {
            gram[(a, b)] = instruments[a].delta.dot(&instruments[b].delta) + k * instruments[a].gamma.dot(&instruments[b].gamma);
        }
    }
    let solve = |m: DMatrix<f64>| m.cholesky().map(|c| c.solve(&rhs));
    let w = match solve(gram.clone()) {
        Some(w) if w.iter().all(|x| x.is_finite()) => w,
        _ => {
            let ridge = 1e-12 * gram.trace().max(f64::MIN_POSITIVE);
            solve(gram + DMatrix::identity(n, n) * ridge).ok_or(Error::DegenerateInstruments)?
        }
    };
    Ok(w.iter().copied().collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HedgeKind {
    Global,
    FxrMim,
    FxrOpm,
    OprMim,
    Eigen,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaturityRule {
    Midpoint,
    Optimal,
}

/// One swaption of a strategy and the range it replicates.
#[derive(Debug, Clone, PartialEq)]
pub struct HedgeLeg {
    pub range_lo: f64,
    pub range_hi: f64,
    pub maturity: f64,
    pub weight: f64,
    /// Price of one unit of the swaption.
    pub price: f64,
    pub greeks: GreekProfile,
    /// Greeks of the option value falling in the range.
    pub target: GreekProfile,
    /// Range-local objective at the chosen weight.
    pub objective: f64,
}

/// Spot-starting par swap added to neutralize residual Delta.
#[derive(Debug, Clone, PartialEq)]
pub struct SwapCorrection {
    pub quote: usize,
    pub swap: AmortizingSwap,
    pub weight: f64,
    pub price: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HedgeStrategy {
    pub kind: HedgeKind,
    pub legs: Vec<HedgeLeg>,
    pub corrections: Vec<SwapCorrection>,
    pub cost: f64,
    /// Global Delta-Gamma mismatch of the swaption legs.
    pub objective: f64,
    /// `k_vol Vol(R)` for optimized partitions, zero otherwise.
    pub vol_penalty: f64,
    pub converged: bool,
    pub diagnostics: Vec<String>,
}

impl HedgeStrategy {
    pub fn knots(&self) -> Vec<f64> {
        self.legs.iter().skip(1).map(|l| l.range_lo).collect()
    }

    pub fn swaption_weights(&self) -> Vec<f64> {
        self.legs.iter().map(|l| l.weight).collect()
    }
}

/// `sum w_j C(T_j)` plus the value of any correcting swaps.
pub fn hedge_cost(legs: &[HedgeLeg], corrections: &[SwapCorrection]) -> f64 {
    legs.iter().map(|l| l.weight * l.price).sum::<f64>() + corrections.iter().map(|c| c.weight * c.price).sum::<f64>()
}

/// `(1 - prod l_j / mean(l)^J)^J`, zero for an equal split.
pub fn partition_volume(lengths: &[f64]) -> f64 {
    let j = lengths.len() as f64;
    let mean = lengths.iter().sum::<f64>() / j;
    let ratio: f64 = lengths.iter().map(|l| l / mean).product();
    (1.0 - ratio).powf(j)
}

fn equal_knots(horizon: f64, j: usize) -> Vec<f64> {
    (1..j).map(|i| horizon * i as f64 / j as f64).collect()
}

fn bounds(horizon: f64, knots: &[f64]) -> Vec<(f64, f64)> {
    let mut e = vec![0.0];
    e.extend_from_slice(knots);
    e.push(horizon);
    e.windows(2).map(|w| (w[0], w[1])).collect()
}

const SCAN_POINTS: usize = 16;

impl HedgeContext {
    fn leg(&self, lo: f64, hi: f64, rule: MaturityRule) -> Result<(HedgeLeg, Option<String>)> {
        let target = self.range_greeks(lo, hi);
        let evaluate = |t: f64| -> Result<(f64, GreekProfile, f64, f64)> {
            let (price, g) = self.swaption(t)?;
            let w = self.local_weight(&g, &target).unwrap_or(0.0);
            Ok((price, g.clone(), w, self.local_objective(w, &g, &target)))
        };
        let mid = 0.5 * (lo + hi);
        let mut best = (mid, evaluate(mid)?);
        if rule == MaturityRule::Optimal {
            let h = (hi - lo) / SCAN_POINTS as f64;
            let scan: Result<Vec<(f64, f64)>> = (0..SCAN_POINTS)
                .into_par_iter()
                .map(|i| {
                    let t = lo + (i as f64 + 0.5) * h;
                    Ok((t, evaluate(t)?.3))
                })
                .collect();
            let scan = scan?;
            let (i_best, _) = scan.iter().enumerate().fold((0, f64::INFINITY), |acc, (i, s)| {
                if s.1 < acc.1 { (i, s.1) } else { acc }
            });
            let a = (scan[i_best].0 - h).max(lo);
            let b = (scan[i_best].0 + h).min(hi - 1e-9);
            let (t, _) = golden_section(|t| evaluate(t).map(|e| e.3).unwrap_or(f64::INFINITY), a, b, 1e-6 * (hi - lo));
            let cand = evaluate(t)?;
            if cand.3 < best.1 .3 {
                best = (t, cand);
            }
        }
        let (maturity, (price, greeks, weight, objective)) = best;
        let note = (target.delta.amax() == 0.0 && target.gamma.amax() == 0.0)
            .then(|| format!("range [{lo:.4}, {hi:.4}] carries no relocation mass; weight set to 0"));
        Ok((HedgeLeg { range_lo: lo, range_hi: hi, maturity, weight, price, greeks, target, objective }, note))
    }

    fn legs_for(&self, knots: &[f64], rule: MaturityRule) -> Result<(Vec<HedgeLeg>, Vec<String>)> {
        let mut legs = Vec::new();
        let mut notes = Vec::new();
        for (lo, hi) in bounds(self.horizon(), knots) {
            let (leg, note) = self.leg(lo, hi, rule)?;
            legs.push(leg);
            notes.extend(note);
        }
        Ok((legs, notes))
    }

    fn finish(&self, kind: HedgeKind, legs: Vec<HedgeLeg>, vol_penalty: f64, converged: bool, diagnostics: Vec<String>) -> HedgeStrategy {
        HedgeStrategy {
            kind,
            cost: hedge_cost(&legs, &[]),
            objective: self.global_objective(&legs),
            legs,
            corrections: Vec::new(),
            vol_penalty,
            converged,
            diagnostics,
        }
    }

    /// Equal ranges with one swaption each, weights solved range by range.
    pub fn hedge_fxr(&self, j: usize, rule: MaturityRule) -> Result<HedgeStrategy> {
        if j == 0 {
            return Err(crate::error::invalid("at least one range is required"));
        }
        let (legs, notes) = self.legs_for(&equal_knots(self.horizon(), j), rule)?;
        let kind = if rule == MaturityRule::Midpoint { HedgeKind::FxrMim } else { HedgeKind::FxrOpm };
        Ok(self.finish(kind, legs, 0.0, true, notes))
    }

    /// Midpoint swaptions of equal ranges with globally solved weights.
    pub fn hedge_global(&self, j: usize) -> Result<HedgeStrategy> {
        let (mut legs, notes) = self.legs_for(&equal_knots(self.horizon(), j), MaturityRule::Midpoint)?;
        let g: Vec<GreekProfile> = legs.iter().map(|l| l.greeks.clone()).collect();
        let w = solve_global(&self.target(), &g, self.cfg.k)?;
        for (l, w) in legs.iter_mut().zip(w) {
            l.weight = w;
            l.objective = self.local_objective(w, &l.greeks, &l.target);
        }
        Ok(self.finish(HedgeKind::Global, legs, 0.0, true, notes))
    }

    fn partition_objective(&self, knots: &[f64]) -> f64 {
        let b = bounds(self.horizon(), knots);
        let lengths: Vec<f64> = b.iter().map(|(lo, hi)| hi - lo).collect();
        let vol = partition_volume(&lengths);
        match self.legs_for(knots, MaturityRule::Midpoint) {
            Ok((legs, _)) => self.global_objective(&legs) + self.cfg.k_vol * vol,
            Err(_) => f64::INFINITY,
        }
    }

    /// Ranges optimized by coordinate descent over the interior knots with
    /// golden-section line searches, restarted from quasi-random partitions;
    /// midpoint swaptions with range-local weights.
    pub fn hedge_opr(&self, j: usize) -> Result<HedgeStrategy> {
        if j < 2 {
            return Err(crate::error::invalid("optimal ranges need at least two ranges"));
        }
        let horizon = self.horizon();
        let min_len = 1e-3 * horizon;
        let starts: Vec<Vec<f64>> = (0..self.cfg.restarts.max(1))
            .map(|r| if r == 0 { equal_knots(horizon, j) } else { halton_knots(r, j, horizon, min_len) })
            .collect();
        let runs: Vec<(Vec<f64>, f64, bool)> = starts
            .into_par_iter()
            .map(|mut knots| {
                let mut f = self.partition_objective(&knots);
                let mut converged = false;
                for _sweep in 0..50 {
                    let before = f;
                    for i in 0..knots.len() {
                        let lo = if i == 0 { 0.0 } else { knots[i - 1] } + min_len;
                        let hi = if i + 1 == knots.len() { horizon } else { knots[i + 1] } - min_len;
                        if hi <= lo {
                            continue;
                        }
                        let mut trial = knots.clone();
                        let (x, fx) = golden_section(
                            |x| {
                                trial[i] = x;
                                self.partition_objective(&trial)
                            },
                            lo,
                            hi,
                            1e-5 * horizon,
                        );
                        if fx < f {
                            knots[i] = x;
                            f = fx;
                        }
                    }
                    if before - f <= 1e-10 * before.abs().max(f64::MIN_POSITIVE) {
                        converged = true;
                        break;
                    }
                }
                (knots, f, converged)
            })
            .collect();
        let (knots, _, converged) = runs
            .into_iter()
            .fold(None::<(Vec<f64>, f64, bool)>, |best, r| match best {
                Some(b) if b.1 <= r.1 => Some(b),
                _ => Some(r),
            })
            .unwrap();
        let (legs, mut notes) = self.legs_for(&knots, MaturityRule::Midpoint)?;
        if !converged {
            notes.push("range optimization stopped at its sweep budget; best partition returned".into());
        }
        let lengths: Vec<f64> = bounds(horizon, &knots).iter().map(|(a, b)| b - a).collect();
        Ok(self.finish(HedgeKind::OprMim, legs, self.cfg.k_vol * partition_volume(&lengths), converged, notes))
    }
}

/// Interior knots from the Halton sequence, sorted and kept `min_len` apart.
fn halton_knots(index: usize, j: usize, horizon: f64, min_len: f64) -> Vec<f64> {
    const PRIMES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    let radical = |mut n: u64, b: u64| {
        let (mut f, mut r) = (1.0, 0.0);
        while n > 0 {
            f /= b as f64;
            r += f * (n % b) as f64;
            n /= b;
        }
        r
    };
    let mut u: Vec<f64> = (0..j - 1).map(|d| radical(index as u64, PRIMES[d % PRIMES.len()])).collect();
    u.sort_by(|a, b| a.total_cmp(b));
    // map into the region where consecutive knots keep the minimum gap
    let span = horizon - j as f64 * min_len;
    u.iter().enumerate().map(|(i, x)| (i + 1) as f64 * min_len + x * span).collect()
}

/// Realized densities of the housing scenarios used by the actuarial hedge
/// and the shock reports.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSet {
    pub densities: Vec<Vec<f64>>,
}

fn min_eigenvalue(m: &DMatrix<f64>) -> Result<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let ev = sym.symmetric_eigenvalues();
    let v = ev.iter().copied().fold(f64::INFINITY, f64::min);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::EigenFailure)
    }
}

impl HedgeContext {
    /// Reweights the swaptions of `base` against the range-local objective
    /// minus `k_eig` times the expected shortfall of the smallest eigenvalue
    /// of the per-scenario Gamma mismatch, then adds calibrating swaps to
    /// remove the residual Delta.
    pub fn hedge_eigen(&self, base: &HedgeStrategy, scenarios: &ScenarioSet) -> Result<HedgeStrategy> {
        if scenarios.densities.is_empty() {
            return Err(crate::error::invalid("the actuarial hedge needs housing scenarios"));
        }
        let (k_eig, alpha) = (self.cfg.k_eig, self.cfg.alpha_opt);
        if !(alpha > 0.0 && alpha <= 1.0) || k_eig < 0.0 {
            return Err(crate::error::invalid("alpha_opt must lie in (0, 1] and k_eig be nonnegative"));
        }
        let mut legs = base.legs.clone();
        let mut notes = base.diagnostics.clone();
        for leg in legs.iter_mut() {
            let w_fxr = self.local_weight(&leg.greeks, &leg.target).unwrap_or(0.0);
            if k_eig == 0.0 {
                leg.weight = w_fxr;
                leg.objective = self.local_objective(w_fxr, &leg.greeks, &leg.target);
                continue;
            }
            let gammas: Vec<DMatrix<f64>> = scenarios
                .densities
                .par_iter()
                .map(|f| self.range_greeks_with(leg.range_lo, leg.range_hi, f).gamma)
                .collect();
            let penalty = |w: f64| -> Result<f64> {
                let mins: Result<Vec<f64>> = gammas.iter().map(|g| min_eigenvalue(&(&leg.greeks.gamma * w - g))).collect();
                Ok(expected_shortfall(&mins?, alpha))
            };
            let upper = 3.0 * w_fxr.abs().max(1e-12);
            let objective = |w: f64| match penalty(w) {
                Ok(p) => self.local_objective(w, &leg.greeks, &leg.target) - k_eig * p,
                Err(_) => f64::INFINITY,
            };
            let (w, fw) = golden_section(objective, 0.0, upper, 1e-10 * upper);
            if !fw.is_finite() {
                return Err(Error::EigenFailure);
            }
            if w >= upper * (1.0 - 1e-6) {
                notes.push(format!(
                    "eigen weight for range [{:.4}, {:.4}] sits on the bracket bound {upper:.6}",
                    leg.range_lo, leg.range_hi
                ));
            }
            leg.weight = w;
            leg.objective = self.local_objective(w, &leg.greeks, &leg.target);
        }
        let corrections = self.delta_correction(&legs)?;
        Ok(HedgeStrategy {
            kind: HedgeKind::Eigen,
            cost: hedge_cost(&legs, &corrections),
            objective: self.global_objective(&legs),
            legs,
            corrections,
            vol_penalty: base.vol_penalty,
            converged: base.converged,
            diagnostics: notes,
        })
    }

    /// Calibrating par swaps of notional `N0` solving the Delta system for
    /// the residual of `legs`.
    pub fn delta_correction(&self, legs: &[HedgeLeg]) -> Result<Vec<SwapCorrection>> {
        let n = self.bumps.quotes();
        let notional = self.epor.notional();
        let curve = self.bumps.base().curve();
        let swaps: Result<Vec<AmortizingSwap>> = (0..n).map(|i| calibrating_swap(curve, i, notional)).collect();
        let swaps = swaps?;
        let (prices, g) = self.bumps.greeks(|hw| {
            swaps.iter().map(|s| s.swap_value(hw.curve(), 0.0)).collect()
        })?;
        let u = self.unit();
        let mut residual = self.target().delta;
        for l in legs {
            residual.axpy(-l.weight, &l.greeks.delta, 1.0);
        }
        let mut d = DMatrix::zeros(n, n);
        for (i, gi) in g.iter().enumerate() {
            d.set_column(i, &(&gi.delta * u));
        }
        let w = d.lu().solve(&residual).ok_or(Error::DegenerateInstruments)?;
        Ok(swaps
            .into_iter()
            .enumerate()
            .map(|(i, swap)| SwapCorrection { quote: i, swap, weight: w[i], price: prices[i] })
            .collect())
    }

    /// Greeks of the hedge position, swaption legs plus correcting swaps,
    /// in objective units.
    pub fn position_greeks(&self, strategy: &HedgeStrategy) -> Result<GreekProfile> {
        let mut total = GreekProfile::zeros(self.bumps.quotes());
        for l in &strategy.legs {
            total.add_scaled(&l.greeks, l.weight);
        }
        if !strategy.corrections.is_empty() {
            let swaps: Vec<&AmortizingSwap> = strategy.corrections.iter().map(|c| &c.swap).collect();
            let (_, g) = self.bumps.greeks(|hw| swaps.iter().map(|s| s.swap_value(hw.curve(), 0.0)).collect())?;
            for (c, gi) in strategy.corrections.iter().zip(&g) {
                total.add_scaled(&in_units(gi, self.unit()), c.weight);
            }
        }
        Ok(total)
    }

    /// Delta of the full position minus the target.
    pub fn residual_delta(&self, strategy: &HedgeStrategy) -> Result<DVector<f64>> {
        Ok(self.position_greeks(strategy)?.delta - self.target().delta)
    }
}

impl HedgeContext {
    /// Reprices exported swaption legs `(range_lo, range_hi, maturity, weight)`
    /// and calibrating-swap corrections `(quote index, weight)` on this
    /// context's curve.
    pub fn rebuild(&self, kind: HedgeKind, legs: &[(f64, f64, f64, f64)], corrections: &[(usize, f64)]) -> Result<HedgeStrategy> {
        let horizon = self.horizon();
        let mut out = Vec::with_capacity(legs.len());
        for &(lo, hi, maturity, weight) in legs {
            if !(0.0 <= lo && lo < hi && hi <= horizon + 1e-12 && lo <= maturity && maturity <= hi) {
                return Err(crate::error::invalid(format!("leg [{lo}, {hi}] with maturity {maturity} is not a valid range")));
            }
            let (price, greeks) = self.swaption(maturity)?;
            let target = self.range_greeks(lo, hi);
            let objective = self.local_objective(weight, &greeks, &target);
            out.push(HedgeLeg { range_lo: lo, range_hi: hi, maturity, weight, price, greeks, target, objective });
        }
        let curve = self.bumps.base().curve();
        let notional = self.epor.notional();
        let mut corr = Vec::with_capacity(corrections.len());
        for &(quote, weight) in corrections {
            if quote >= self.bumps.quotes() {
                return Err(crate::error::invalid(format!("correction refers to missing quote {quote}")));
            }
            let swap = calibrating_swap(curve, quote, notional)?;
            let price = swap.swap_value(curve, 0.0)?;
            corr.push(SwapCorrection { quote, swap, weight, price });
        }
        Ok(HedgeStrategy {
            kind,
            cost: hedge_cost(&out, &corr),
            objective: self.global_objective(&out),
            legs: out,
            corrections: corr,
            vol_penalty: 0.0,
            converged: true,
            diagnostics: Vec::new(),
        })
    }
}

/// Per-quote shifts in basis points.
pub type Shock = Vec<f64>;

/// Every combination of `{-25, 0, 25}` bp per quote except no shock, then
/// `+-50` bp on each quote alone.
pub fn default_shock_grid(quotes: usize) -> Vec<Shock> {
    let mut out = Vec::new();
    let total = 3usize.pow(quotes as u32);
    for code in 0..total {
        let mut c = code;
        let s: Shock = (0..quotes)
            .map(|_| {
                let v = [-25.0, 0.0, 25.0][c % 3];
                c /= 3;
                v
            })
            .rev()
            .collect();
        if s.iter().any(|&x| x != 0.0) {
            out.push(s);
        }
    }
    for i in 0..quotes {
        for v in [50.0, -50.0] {
            let mut s = vec![0.0; quotes];
            s[i] = v;
            out.push(s);
        }
    }
    out
}

pub fn shock_label(s: &[f64]) -> String {
    let parts: Vec<String> = s.iter().map(|v| format!("{v}")).collect();
    format!("[{}]", parts.join(" "))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShockOutcome {
    pub shock: Shock,
    /// Change of the hedged position per scenario, in currency.
    pub changes: Vec<f64>,
    pub es: f64,
    pub prob_loss: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShockReport {
    pub alpha: f64,
    pub outcomes: Vec<ShockOutcome>,
}

impl ShockReport {
    /// Indices of the `n` shocks with the largest mean absolute change.
    pub fn largest(&self, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.outcomes.len()).collect();
        let size = |o: &ShockOutcome| o.changes.iter().map(|x| x.abs()).sum::<f64>() / o.changes.len() as f64;
        idx.sort_by(|&a, &b| size(&self.outcomes[b]).total_cmp(&size(&self.outcomes[a])));
        idx.truncate(n);
        idx
    }
}

impl HedgeContext {
    /// Change of `hedge - option` per housing scenario under each curve shock,
    /// with every scenario density held fixed.
    pub fn shock_analysis(&self, strategy: &HedgeStrategy, scenarios: &ScenarioSet, shocks: &[Shock], alpha: f64) -> Result<ShockReport> {
        if scenarios.densities.is_empty() {
            return Err(crate::error::invalid("shock analysis needs housing scenarios"));
        }
        let n = self.bumps.quotes();
        let base = self.bumps.base();
        let position = |hw: &HullWhite, epor: &Epor| -> Result<(f64, Vec<f64>)> {
            let mut hedge = 0.0;
            for l in &strategy.legs {
                hedge += l.weight * self.epor.swap.receiver_swaption(hw, l.maturity, Side::Right)?;
            }
            for c in &strategy.corrections {
                hedge += c.weight * c.swap.swap_value(hw.curve(), 0.0)?;
            }
            let eff = epor.effective_weights();
            let v: Vec<f64> = scenarios.densities.iter().map(|f| dot(eff, f)).collect();
            Ok((hedge, v))
        };
        let (h0, v0) = position(base, &self.epor)?;
        let outcomes: Result<Vec<ShockOutcome>> = shocks
            .par_iter()
            .map(|s| {
                if s.len() != n {
                    return Err(crate::error::invalid(format!("shock {} does not match {n} quotes", shock_label(s))));
                }
                let shifts: Vec<f64> = s.iter().map(|b| b * 1e-4).collect();
                let hw = base.with_curve(base.curve().bump_quotes(&shifts)?);
                let epor = self.epor.reprice(hw.clone())?;
                let (h1, v1) = position(&hw, &epor)?;
                let changes: Vec<f64> = v0.iter().zip(&v1).map(|(a, b)| (h1 - b) - (h0 - a)).collect();
                let m = changes.len() as f64;
                Ok(ShockOutcome {
                    shock: s.clone(),
                    es: expected_shortfall(&changes, alpha),
                    prob_loss: changes.iter().filter(|&&x| x < 0.0).count() as f64 / m,
                    mean: pairwise_sum(&changes) / m,
                    changes,
                })
            })
            .collect();
        Ok(ShockReport { alpha, outcomes: outcomes? })
    }
}
