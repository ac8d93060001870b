//! Amortizing swaps, their annuity / swap rate / value, European receiver
//! swaptions under Hull-White by Jamshidian decomposition, and analytic swap
//! Greeks with respect to the curve quotes.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::curve::{regular_schedule, DiscountCurve};
use crate::error::{Error, Result};
use crate::greeks::GreekProfile;
use crate::hullwhite::HullWhite;
use crate::numerics::find_root;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    Bullet,
    Linear,
    Custom,
}

/// How the coupon period that straddles an exercise time is settled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccrualConvention {
    /// The floating leg restarts at exercise while the fixed leg keeps the
    /// full straddled coupon.
    ResetAtExercise,
    /// Fixed interest accrued up to exercise is settled with the
    /// prepayment, so only the stub from exercise onwards remains.
    #[default]
    AccruedSettled,
}

/// Which payments participate when the exercise time falls on a payment
/// date: strictly later ones (`Right`) or also the one due at exercise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// Fixed-rate amortizing swap seen from the receiver of the fixed leg.
#[derive(Debug, Clone, PartialEq)]
pub struct AmortizingSwap<F = f64> {
    payment_dates: Vec<F>,
    /// `notionals[j]` is outstanding over `(t_j, t_{j+1}]`, with `t_0 = 0`.
    notionals: Vec<F>,
    pub fixed_rate: F,
    pub kind: ScheduleKind,
    pub convention: AccrualConvention,
}

/// Remaining cash flows after an exercise time.
#[derive(Debug, Clone, PartialEq)]
pub struct Remaining<F> {
    pub exercise: F,
    pub times: Vec<F>,
    /// Notional times accrual of each fixed payment.
    pub accrual_notional: Vec<F>,
    /// Principal repaid on each date.
    pub amortization: Vec<F>,
    /// Notional repaid at par on exercise.
    pub prepay: F,
}

impl<F: Scalar> Remaining<F> {
    /// Bond-portfolio coefficients `c_j` of the receiver swap at `rate`.
    pub fn coefficients(&self, rate: F) -> Vec<F> {
        self.accrual_notional.iter().zip(&self.amortization).map(|(&an, &am)| rate * an + am).collect()
    }
}

/// Annuity, floating-leg value, swap rate and receiver value at one date.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwapLegs<F> {
    pub annuity: F,
    pub floating: F,
    pub swap_rate: F,
    pub value: F,
}

impl<F: Scalar> AmortizingSwap<F> {
    pub fn custom(payment_dates: Vec<F>, notionals: Vec<F>, fixed_rate: F) -> Result<Self> {
        if payment_dates.is_empty() || payment_dates.len() != notionals.len() {
            return Err(crate::error::invalid(
                "one period notional is required per payment date and at least one date",
            ));
        }
        if !(payment_dates[0] > F::zero()) || payment_dates.windows(2).any(|w| w[1] <= w[0]) {
            return Err(crate::error::invalid("payment dates must be positive and strictly increasing"));
        }
        if notionals.iter().any(|n| !(*n >= F::zero()) || !n.is_finite()) {
            return Err(crate::error::invalid("notionals must be nonnegative"));
        }
        if !fixed_rate.is_finite() {
            return Err(crate::error::invalid("fixed rate must be finite"));
        }
        Ok(Self {
            payment_dates,
            notionals,
            fixed_rate,
            kind: ScheduleKind::Custom,
            convention: AccrualConvention::default(),
        })
    }

    pub fn bullet(end: F, frequency: u32, fixed_rate: F, notional: F) -> Result<Self> {
        let dates = regular_schedule(end, frequency);
        let n = dates.len();
        let mut s = Self::custom(dates, vec![notional; n], fixed_rate)?;
        s.kind = ScheduleKind::Bullet;
        Ok(s)
    }

    /// Equal principal repayments on every date.
    pub fn linear(end: F, frequency: u32, fixed_rate: F, notional: F) -> Result<Self> {
        let dates = regular_schedule(end, frequency);
        let n = dates.len();
        let nf = F::lit(n as f64);
        let notionals = (0..n).map(|j| notional * F::lit((n - j) as f64) / nf).collect();
        let mut s = Self::custom(dates, notionals, fixed_rate)?;
        s.kind = ScheduleKind::Linear;
        Ok(s)
    }

    pub fn with_fixed_rate(&self, fixed_rate: F) -> Self {
        Self { fixed_rate, ..self.clone() }
    }

    pub fn with_convention(&self, convention: AccrualConvention) -> Self {
        Self { convention, ..self.clone() }
    }

    pub fn payment_dates(&self) -> &[F] {
        &self.payment_dates
    }

    /// Period notionals `N(t_{j-1})`, one per payment date.
    pub fn period_notionals(&self) -> &[F] {
        &self.notionals
    }

    /// Outstanding notional after date `t_j`; zero after the final date.
    pub fn notional_after(&self, j: usize) -> F {
        self.notionals.get(j).copied().unwrap_or(F::zero())
    }

    pub fn initial_notional(&self) -> F {
        self.notionals[0]
    }

    pub fn end(&self) -> F {
        *self.payment_dates.last().unwrap()
    }

    /// Cash flows still due after exercise at `t`.
    pub fn remaining(&self, t: F, side: Side) -> Result<Remaining<F>> {
        let end = self.end();
        let beyond = match side {
            Side::Left => t > end,
            Side::Right => t >= end,
        };
        if beyond || t < F::zero() {
            return Err(Error::ExerciseAfterEnd { t: t.as_f64(), end: end.as_f64() });
        }
        let first = self
            .payment_dates
            .iter()
            .position(|&d| match side {
                Side::Left => d >= t,
                Side::Right => d > t,
            })
            .unwrap();
        let n = self.payment_dates.len();
        let mut times = Vec::with_capacity(n - first);
        let mut accrual_notional = Vec::with_capacity(n - first);
        let mut amortization = Vec::with_capacity(n - first);
        for j in first..n {
            let start = if j == 0 { F::zero() } else { self.payment_dates[j - 1] };
            let accrual_start = if j == first && self.convention == AccrualConvention::AccruedSettled {
                start.max(t)
            } else {
                start
            };
            let nj = self.notionals[j];
            times.push(self.payment_dates[j]);
            accrual_notional.push(nj * (self.payment_dates[j] - accrual_start));
            amortization.push(nj - self.notional_after(j + 1));
        }
        Ok(Remaining { exercise: t, times, accrual_notional, amortization, prepay: self.notionals[first] })
    }

    /// Legs at `t` given bond prices `P(t, s)` from `disc`.
    pub fn legs_with<D>(&self, t: F, side: Side, mut disc: D) -> Result<SwapLegs<F>>
    where
        D: FnMut(F) -> Result<F>,
    {
        let rem = self.remaining(t, side)?;
        let mut annuity = F::zero();
        let mut amort_pv = F::zero();
        for ((&s, &an), &am) in rem.times.iter().zip(&rem.accrual_notional).zip(&rem.amortization) {
            let p = disc(s)?;
            annuity = annuity + an * p;
            amort_pv = amort_pv + am * p;
        }
        // sum N_{j-1} (P_{j-1} - P_j) telescopes to N_prepay - sum (N_{j-1} - N_j) P_j
        let floating = rem.prepay - amort_pv;
        if annuity == F::zero() {
            return Err(Error::ZeroAnnuity(t.as_f64()));
        }
        let swap_rate = floating / annuity;
        let value = annuity * (self.fixed_rate - swap_rate);
        Ok(SwapLegs { annuity, floating, swap_rate, value })
    }

    /// Legs on the initial curve, forward-valued at `t`.
    pub fn legs_on_curve(&self, curve: &DiscountCurve<F>, t: F, side: Side) -> Result<SwapLegs<F>> {
        self.legs_with(t, side, |s| curve.discount(t, s))
    }

    /// Legs at `t` in the Hull-White state `x(t) = x`.
    pub fn legs_in_state(&self, hw: &HullWhite<F>, t: F, x: F, side: Side) -> Result<SwapLegs<F>> {
        self.legs_with(t, side, |s| hw.zcb_price(t, s, x))
    }

    pub fn annuity(&self, curve: &DiscountCurve<F>, t: F) -> Result<F> {
        Ok(self.legs_on_curve(curve, t, Side::Right)?.annuity)
    }

    pub fn swap_rate(&self, curve: &DiscountCurve<F>, t: F) -> Result<F> {
        Ok(self.legs_on_curve(curve, t, Side::Right)?.swap_rate)
    }

    pub fn swap_value(&self, curve: &DiscountCurve<F>, t: F) -> Result<F> {
        Ok(self.legs_on_curve(curve, t, Side::Right)?.value)
    }

    /// Time-`t0` price of the European receiver swaption exercisable at `t`.
    pub fn receiver_swaption(&self, hw: &HullWhite<F>, t: F, side: Side) -> Result<F> {
        jamshidian(hw, &self.remaining(t, side)?, self.fixed_rate, true)
    }

    pub fn payer_swaption(&self, hw: &HullWhite<F>, t: F, side: Side) -> Result<F> {
        jamshidian(hw, &self.remaining(t, side)?, self.fixed_rate, false)
    }
}

/// Jamshidian decomposition of an option on `sum c_j P(T, t_j) - prepay`.
pub fn jamshidian<F: Scalar>(hw: &HullWhite<F>, rem: &Remaining<F>, rate: F, receiver: bool) -> Result<F> {
    let t = rem.exercise;
    let c = rem.coefficients(rate);
    let curve = hw.curve();
    let forward =
        c.iter().zip(&rem.times).fold(F::zero(), |acc, (&cj, &s)| acc + cj * curve.df(s)) - rem.prepay * curve.df(t);
    let sign = if receiver { F::one() } else { -F::one() };
    if rem.prepay == F::zero() && c.iter().all(|&cj| cj == F::zero()) {
        return Ok(F::zero());
    }
    if t == F::zero() || hw.volatility == F::zero() {
        return Ok((sign * forward).max(F::zero()));
    }
    let g = |x: F| -> F {
        c.iter()
            .zip(&rem.times)
            .fold(F::zero(), |acc, (&cj, &s)| acc + cj * hw.zcb_price(t, s, x).unwrap_or(F::nan()))
            - rem.prepay
    };
    // bracket the critical state; g is decreasing when every c_j >= 0
    let mut lo = -F::lit(0.05);
    let mut hi = F::lit(0.05);
    let mut expansions = 0;
    while g(lo) < F::zero() && expansions < 60 {
        lo = lo * F::lit(2.0);
        expansions += 1;
    }
    expansions = 0;
    while g(hi) > F::zero() && expansions < 60 {
        hi = hi * F::lit(2.0);
        expansions += 1;
    }
    let (g_lo, g_hi) = (g(lo), g(hi));
    if g_lo < F::zero() {
        // never in the money for the receiver
        return Ok(if receiver { F::zero() } else { -forward });
    }
    if g_hi > F::zero() {
        return Ok(if receiver { forward } else { F::zero() });
    }
    let scale = rem.prepay.max(F::one());
    let x_star = find_root(g, lo, hi, F::solver_tol() * scale, F::epsilon())?;
    let mut price = F::zero();
    for (&cj, &s) in c.iter().zip(&rem.times) {
        if cj == F::zero() {
            continue;
        }
        let strike = hw.zcb_price(t, s, x_star)?;
        price = price + cj * hw.bond_option(t, s, strike, receiver);
    }
    Ok(price)
}

/// First and second derivatives of `P(t0; t)` for each `t` in `times` with
/// respect to every quote of `curve`.
pub struct DiscountSensitivities {
    /// `first[j][i] = dP(t_j)/dS_i`.
    pub first: Vec<Vec<f64>>,
    /// `second[j][(i, k)] = d2P(t_j)/dS_i dS_k`.
    pub second: Vec<DMatrix<f64>>,
}

/// Bump-and-rebootstrap sensitivities with one Richardson extrapolation step.
pub fn discount_sensitivities(curve: &DiscountCurve, times: &[f64], step: f64) -> Result<DiscountSensitivities> {
    let n = curve.quotes().len();
    let shifted = |shifts: &[(usize, f64)]| -> Result<Vec<f64>> {
        let mut v = vec![0.0; n];
        for &(i, s) in shifts {
            v[i] += s;
        }
        let c = curve.bump_quotes(&v)?;
        Ok(times.iter().map(|&t| c.df(t)).collect())
    };
    let base: Vec<f64> = times.iter().map(|&t| curve.df(t)).collect();
    let m = times.len();
    let mut first = vec![vec![0.0; n]; m];
    let mut second = vec![DMatrix::zeros(n, n); m];
    for i in 0..n {
        let d1 = |h: f64| -> Result<(Vec<f64>, Vec<f64>)> {
            let up = shifted(&[(i, h)])?;
            let dn = shifted(&[(i, -h)])?;
            let d: Vec<f64> = (0..m).map(|j| (up[j] - dn[j]) / (2.0 * h)).collect();
            let dd: Vec<f64> = (0..m).map(|j| (up[j] - 2.0 * base[j] + dn[j]) / (h * h)).collect();
            Ok((d, dd))
        };
        let (a1, a2) = d1(step)?;
        let (b1, b2) = d1(0.5 * step)?;
        for j in 0..m {
            first[j][i] = (4.0 * b1[j] - a1[j]) / 3.0;
            second[j][(i, i)] = (4.0 * b2[j] - a2[j]) / 3.0;
        }
        for k in 0..i {
            let cross = |h: f64| -> Result<Vec<f64>> {
                let pp = shifted(&[(i, h), (k, h)])?;
                let pm = shifted(&[(i, h), (k, -h)])?;
                let mp = shifted(&[(i, -h), (k, h)])?;
                let mm = shifted(&[(i, -h), (k, -h)])?;
                Ok((0..m).map(|j| (pp[j] - pm[j] - mp[j] + mm[j]) / (4.0 * h * h)).collect())
            };
            let a = cross(step)?;
            let b = cross(0.5 * step)?;
            for j in 0..m {
                let v = (4.0 * b[j] - a[j]) / 3.0;
                second[j][(i, k)] = v;
                second[j][(k, i)] = v;
            }
        }
    }
    Ok(DiscountSensitivities { first, second })
}

/// Delta and Gamma of a spot-starting swap with respect to the quotes of
/// `curve`, assembled from the annuity and swap-rate sensitivities.
pub fn swap_greeks_analytic(curve: &DiscountCurve, swap: &AmortizingSwap) -> Result<GreekProfile> {
    let rem = swap.remaining(0.0, Side::Right)?;
    let sens = discount_sensitivities(curve, &rem.times, 1e-4)?;
    let n = curve.quotes().len();
    let legs = swap.legs_on_curve(curve, 0.0, Side::Right)?;
    let (a, kappa, k) = (legs.annuity, legs.swap_rate, swap.fixed_rate);

    let mut da = DVector::zeros(n);
    let mut dfl = DVector::zeros(n);
    let mut d2a = DMatrix::zeros(n, n);
    let mut d2fl = DMatrix::zeros(n, n);
    for (j, (&an, &am)) in rem.accrual_notional.iter().zip(&rem.amortization).enumerate() {
        for i in 0..n {
            da[i] += an * sens.first[j][i];
            dfl[i] -= am * sens.first[j][i];
        }
        d2a += &sens.second[j] * an;
        d2fl -= &sens.second[j] * am;
    }
    let dk = (&dfl - &da * kappa) / a;
    let mut d2k = DMatrix::zeros(n, n);
    for i in 0..n {
        for l in 0..n {
            d2k[(i, l)] = (d2fl[(i, l)] - dk[i] * da[l] - dk[l] * da[i] - kappa * d2a[(i, l)]) / a;
        }
    }
    let delta = &da * (k - kappa) - &dk * a;
    let mut gamma = DMatrix::zeros(n, n);
    for i in 0..n {
        for l in 0..n {
            gamma[(i, l)] = d2a[(i, l)] * (k - kappa) - a * d2k[(i, l)] - (da[i] * dk[l] + da[l] * dk[i]);
        }
    }
    Ok(GreekProfile { delta, gamma })
}

/// Spot-starting swap matching calibrating quote `index`, at its par rate.
pub fn calibrating_swap(curve: &DiscountCurve, index: usize, notional: f64) -> Result<AmortizingSwap> {
    let q = curve
        .quotes()
        .get(index)
        .ok_or_else(|| crate::error::invalid(format!("quote index {index} out of range")))?;
    AmortizingSwap::bullet(q.end, q.frequency, q.par_rate, notional)
}
