//! Discount curve bootstrapped from par swap quotes.
//!
//! Discount factors are interpolated log-linearly between pillars (piecewise
//! flat continuously-compounded forwards) and extrapolated flat-forward past
//! the last pillar. Pillars are the quote end dates plus `t0 = 0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::find_root;
use crate::scalar::Scalar;

/// Par rate of a spot-starting fixed-vs-floating swap used for calibration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwapQuote<F = f64> {
    /// End date in years from `t0`.
    pub end: F,
    /// Par fixed rate, decimal per annum.
    pub par_rate: F,
    /// Fixed payments per year.
    pub frequency: u32,
}

impl<F: Scalar> SwapQuote<F> {
    pub fn new(end: F, par_rate: F, frequency: u32) -> Self {
        Self { end, par_rate, frequency }
    }

    fn validate(&self) -> Result<()> {
        if !(self.end > F::zero()) || !self.end.is_finite() {
            return Err(crate::error::invalid(format!("quote end {} must be positive", self.end)));
        }
        if self.frequency == 0 {
            return Err(crate::error::invalid("quote payment frequency must be at least 1"));
        }
        if !self.par_rate.is_finite() {
            return Err(crate::error::invalid("quote par rate must be finite"));
        }
        Ok(())
    }

    /// Fixed-leg payment dates, rolled backwards from the end date. A short
    /// first period absorbs any remainder.
    pub fn payment_dates(&self) -> Vec<F> {
        regular_schedule(self.end, self.frequency)
    }
}

/// Dates `end - k / frequency` that lie strictly after zero, ascending.
pub fn regular_schedule<F: Scalar>(end: F, frequency: u32) -> Vec<F> {
    let freq = F::lit(frequency as f64);
    let n = (end * freq - F::lit(1e-9)).ceil().to_usize().unwrap_or(0).max(1);
    (1..=n)
        .map(|k| end - F::lit((n - k) as f64) / freq)
        .filter(|t| *t > F::zero())
        .collect()
}

/// Zero-coupon discount curve `P(t0; t)` keyed to its calibrating quotes.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscountCurve<F = f64> {
    times: Vec<F>,
    log_discounts: Vec<F>,
    quotes: Vec<SwapQuote<F>>,
}

impl<F: Scalar> DiscountCurve<F> {
    /// Sequential bootstrap: one pillar per quote, each solved so the quote's
    /// par swap is worth zero.
    pub fn bootstrap(quotes: &[SwapQuote<F>]) -> Result<Self> {
        if quotes.is_empty() {
            return Err(crate::error::invalid("at least one quote is required"));
        }
        let mut prev_end = F::zero();
        for (index, q) in quotes.iter().enumerate() {
            q.validate()?;
            if q.end <= prev_end {
                return Err(Error::NonMonotoneQuotes { index, end: q.end.as_f64() });
            }
            prev_end = q.end;
        }

        let mut curve = DiscountCurve {
            times: vec![F::zero()],
            log_discounts: vec![F::zero()],
            quotes: quotes.to_vec(),
        };
        for (pillar, q) in quotes.iter().enumerate() {
            let y = curve.solve_pillar(pillar, q)?;
            curve.times.push(q.end);
            curve.log_discounts.push(y);
        }
        Ok(curve)
    }

    /// Log discount factor at the new pillar that reprices quote `q` at par,
    /// given the pillars already in place.
    fn solve_pillar(&self, pillar: usize, q: &SwapQuote<F>) -> Result<F> {
        let t_prev = *self.times.last().unwrap();
        let y_prev = *self.log_discounts.last().unwrap();
        let span = q.end - t_prev;
        let dates = q.payment_dates();
        let mut known = F::zero();
        // (accrual, interpolation weight on the unknown) for dates past t_prev
        let mut pending: Vec<(F, F, F)> = Vec::new();
        let mut start = F::zero();
        for &t in &dates {
            let accrual = t - start;
            start = t;
            if t <= t_prev {
                known = known + accrual * self.log_discount(t).exp();
            } else {
                pending.push((t, accrual, (t - t_prev) / span));
            }
        }
        let k = q.par_rate;
        let value = |y: F| -> (F, F) {
            let mut v = k * known - F::one() + y.exp();
            let mut dv = y.exp();
            for &(_, accrual, w) in &pending {
                let p = (y_prev + (y - y_prev) * w).exp();
                v = v + k * accrual * p;
                dv = dv + k * accrual * p * w;
            }
            (v, dv)
        };

        let tol = F::solver_tol();
        // the swap value tends to k*known - 1 as the pillar discount vanishes
        if k * known - F::one() >= F::zero() {
            return Err(Error::NonPositiveDiscount { pillar, time: q.end.as_f64() });
        }

        let mut y = y_prev - k.max(F::zero()) * span;
        for _ in 0..60 {
            let (v, dv) = value(y);
            if v == F::zero() {
                return Ok(y);
            }
            if !(dv > F::zero()) || !v.is_finite() {
                break;
            }
            let step = v / dv;
            y = y - step;
            if !y.is_finite() {
                break;
            }
            if step.abs() <= F::epsilon() * (F::one() + y.abs()) {
                if value(y).0.abs() <= tol {
                    return Ok(y);
                }
                break;
            }
        }

        // bracketed fallback
        let mut lo = y_prev - F::one();
        let mut hi = y_prev + F::one();
        let mut guard = 0;
        while value(lo).0 > F::zero() && guard < 200 {
            lo = lo - (hi - lo);
            guard += 1;
        }
        guard = 0;
        while value(hi).0 < F::zero() && guard < 200 {
            hi = hi + (hi - lo);
            guard += 1;
        }
        find_root(|y| value(y).0, lo, hi, tol, F::epsilon())
            .map_err(|_| Error::NonPositiveDiscount { pillar, time: q.end.as_f64() })
    }

    pub fn quotes(&self) -> &[SwapQuote<F>] {
        &self.quotes
    }

    /// Pillar times including `t0 = 0`.
    pub fn pillar_times(&self) -> &[F] {
        &self.times
    }

    pub fn pillar_discounts(&self) -> Vec<F> {
        self.log_discounts.iter().map(|y| y.exp()).collect()
    }

    /// `ln P(t0; t)` under log-linear interpolation.
    pub fn log_discount(&self, t: F) -> F {
        if t <= F::zero() {
            return F::zero();
        }
        let n = self.times.len();
        let i = match self
            .times
            .binary_search_by(|probe| probe.partial_cmp(&t).unwrap_or(std::cmp::Ordering::Less))
        {
            Ok(i) => return self.log_discounts[i],
            Err(i) => i,
        };
        let (i0, i1) = if i >= n { (n - 2, n - 1) } else { (i - 1, i) };
        let (t0, t1) = (self.times[i0], self.times[i1]);
        let (y0, y1) = (self.log_discounts[i0], self.log_discounts[i1]);
        y0 + (y1 - y0) * (t - t0) / (t1 - t0)
    }

    /// `P(t0; t)`.
    pub fn df(&self, t: F) -> F {
        self.log_discount(t).exp()
    }

    /// Forward discount factor `P(t; s) = P(t0; s) / P(t0; t)`.
    pub fn discount(&self, t: F, s: F) -> Result<F> {
        if s < t {
            return Err(Error::TimeOrder { t: t.as_f64(), s: s.as_f64() });
        }
        if t < F::zero() {
            return Err(crate::error::invalid("discount start before t0"));
        }
        Ok((self.log_discount(s) - self.log_discount(t)).exp())
    }

    /// Instantaneous forward rate `f(t0; t)`; piecewise flat, right-continuous
    /// at pillars.
    pub fn forward_rate(&self, t: F) -> F {
        let n = self.times.len();
        let mut i = n - 2;
        for k in 0..n - 1 {
            if t < self.times[k + 1] {
                i = k;
                break;
            }
        }
        -(self.log_discounts[i + 1] - self.log_discounts[i]) / (self.times[i + 1] - self.times[i])
    }

    /// Re-bootstraps with `quotes[index].par_rate += size`.
    pub fn bump_quote(&self, index: usize, size: F) -> Result<Self> {
        if index >= self.quotes.len() {
            return Err(crate::error::invalid(format!(
                "quote index {index} out of range ({} quotes)",
                self.quotes.len()
            )));
        }
        let mut shifts = vec![F::zero(); self.quotes.len()];
        shifts[index] = size;
        self.bump_quotes(&shifts)
    }

    /// Re-bootstraps with every par rate shifted by the matching entry.
    pub fn bump_quotes(&self, shifts: &[F]) -> Result<Self> {
        if shifts.len() != self.quotes.len() {
            return Err(crate::error::invalid(format!(
                "{} shifts for {} quotes",
                shifts.len(),
                self.quotes.len()
            )));
        }
        let quotes: Vec<_> = self
            .quotes
            .iter()
            .zip(shifts)
            .map(|(q, &s)| SwapQuote { par_rate: q.par_rate + s, ..*q })
            .collect();
        Self::bootstrap(&quotes)
    }

    /// Value per unit notional of receiving `fixed_rate` on quote `index`'s
    /// schedule against floating.
    pub fn par_swap_value(&self, index: usize, fixed_rate: F) -> F {
        let q = &self.quotes[index];
        let mut start = F::zero();
        let mut fixed = F::zero();
        for t in q.payment_dates() {
            fixed = fixed + (t - start) * self.df(t);
            start = t;
        }
        fixed_rate * fixed - (F::one() - self.df(q.end))
    }
}

/// Flat par curve with annual quotes at the given end dates.
pub fn flat_par_curve<F: Scalar>(rate: F, ends: &[F]) -> Result<DiscountCurve<F>> {
    let quotes: Vec<_> = ends.iter().map(|&e| SwapQuote::new(e, rate, 1)).collect();
    DiscountCurve::bootstrap(&quotes)
}
