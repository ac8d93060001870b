//! Small numerical kernels shared by the modules: bracketed root finding,
//! golden-section search, deterministic reductions, empirical risk measures
//! and seeded random substreams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Finds a root of `f` on `[lo, hi]` by Illinois-modified secant steps with
/// a bisection fallback. `f(lo)` and `f(hi)` must differ in sign.
///
/// Stops when `|f(x)| <= ftol` or the bracket is narrower than `xtol`.
pub fn find_root<F, Func>(mut f: Func, lo: F, hi: F, ftol: F, xtol: F) -> Result<F>
where
    F: Scalar,
    Func: FnMut(F) -> F,
{
    let (mut a, mut b) = (lo, hi);
    let (mut fa, mut fb) = (f(a), f(b));
    if fa == F::zero() {
        return Ok(a);
    }
    if fb == F::zero() {
        return Ok(b);
    }
    if fa.signum() == fb.signum() || fa.is_nan() || fb.is_nan() {
        return Err(Error::RootNotBracketed {
            lo: lo.as_f64(),
            hi: hi.as_f64(),
            f_lo: fa.as_f64(),
            f_hi: fb.as_f64(),
        });
    }
    let half = F::lit(0.5);
    // side of the bracket retained on the previous step, for the Illinois rule
    let mut last_side = 0i8;
    for _ in 0..400 {
        let width = (b - a).abs();
        let mut x = b - fb * (b - a) / (fb - fa);
        let lo_b = a.min(b);
        let hi_b = a.max(b);
        if !(x > lo_b && x < hi_b) || !x.is_finite() {
            x = a + (b - a) * half;
        }
        let fx = f(x);
        if fx.abs() <= ftol || width <= xtol {
            return Ok(x);
        }
        if fx.signum() == fb.signum() {
            b = x;
            fb = fx;
            if last_side == 1 {
                fa = fa * half;
            }
            last_side = 1;
        } else {
            a = x;
            fa = fx;
            if last_side == -1 {
                fb = fb * half;
            }
            last_side = -1;
        }
        // force a bisection when the secant makes poor progress
        if (b - a).abs() > width * F::lit(0.75) {
            let m = a + (b - a) * half;
            let fm = f(m);
            if fm.abs() <= ftol {
                return Ok(m);
            }
            if fm.signum() == fa.signum() {
                a = m;
                fa = fm;
            } else {
                b = m;
                fb = fm;
            }
            last_side = 0;
        }
    }
    Ok(if fa.abs() < fb.abs() { a } else { b })
}

/// Golden-section minimisation of a unimodal function on `[a, b]`.
/// Returns the best abscissa found and its value; endpoint values are
/// included as candidates.
pub fn golden_section<Func>(mut f: Func, a: f64, b: f64, tol: f64) -> (f64, f64)
where
    Func: FnMut(f64) -> f64,
{
    let inv_phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (a.min(b), a.max(b));
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    let mut best = if f1 <= f2 { (x1, f1) } else { (x2, f2) };
    while hi - lo > tol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
            if f1 < best.1 {
                best = (x1, f1);
            }
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
            if f2 < best.1 {
                best = (x2, f2);
            }
        }
    }
    for x in [a, b] {
        let fx = f(x);
        if fx < best.1 {
            best = (x, fx);
        }
    }
    best
}

/// Pairwise summation; the result depends only on the order of `xs`.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 16 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Random stream `stream` of the generator family identified by `seed`.
///
/// Every Monte-Carlo path or scenario draws from its own substream, so
/// results do not depend on how work is split across threads.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const CHUNK: usize = 512;

/// Sums `width`-wide contributions of items `0..n` in parallel. Items are
/// grouped in fixed-size chunks accumulated in index order and the chunk
/// totals are added in chunk order, so the result does not depend on the
/// number of worker threads.
pub fn par_accumulate<Func>(n: usize, width: usize, f: Func) -> Vec<f64>
where
    Func: Fn(usize, &mut [f64]) + Sync,
{
    let chunks: Vec<Vec<f64>> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut acc = vec![0.0; width];
            for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
                f(i, &mut acc);
            }
            acc
        })
        .collect();
    let mut total = vec![0.0; width];
    for c in chunks {
        for (t, v) in total.iter_mut().zip(c) {
            *t += v;
        }
    }
    total
}

/// Empirical quantile with linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    if sorted.len() == 1 {
        return sorted[0];
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 >= sorted.len() {
        sorted[sorted.len() - 1]
    } else {
        sorted[i] * (1.0 - frac) + sorted[i + 1] * frac
    }
}

/// Expected shortfall `E[X | X <= Q_alpha(X)]` of an empirical sample: the
/// mean of the `ceil(alpha * n)` smallest observations (at least one).
pub fn expected_shortfall(sample: &[f64], alpha: f64) -> f64 {
    assert!(!sample.is_empty(), "expected shortfall of an empty sample");
    let mut sorted = sample.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let m = ((alpha * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[..m].iter().sum::<f64>() / m as f64
}

/// Sample mean and standard error of the mean.
pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = pairwise_sum(xs) / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&dev) / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn root_of_cubic() {
        let r = find_root(|x: f64| x * x * x - 2.0, 0.0, 3.0, 1e-15, 1e-15).unwrap();
        assert!((r - 2.0_f64.cbrt()).abs() < 1e-14);
    }

    #[test]
    fn root_requires_sign_change() {
        let err = find_root(|x: f64| x * x + 1.0, -1.0, 1.0, 1e-12, 1e-12);
        assert!(matches!(err, Err(Error::RootNotBracketed { .. })));
    }

    #[test]
    fn golden_section_finds_parabola_vertex() {
        let (x, fx) = golden_section(|x| (x - 0.3) * (x - 0.3) + 1.0, -2.0, 5.0, 1e-10);
        assert!((x - 0.3).abs() < 1e-8);
        assert!((fx - 1.0).abs() < 1e-15);
    }

    #[test]
    fn golden_section_keeps_endpoint_minimum() {
        let (x, _) = golden_section(|x| x, 1.0, 2.0, 1e-9);
        assert_eq!(x, 1.0);
    }

    #[test]
    fn expected_shortfall_of_constant_and_ranked() {
        assert_eq!(expected_shortfall(&[-0.5], 0.01), -0.5);
        let xs: Vec<f64> = (0..100).map(|i| i as f64).collect();
        assert_eq!(expected_shortfall(&xs, 0.05), 2.0);
    }

    #[test]
    fn substreams_are_reproducible_and_distinct() {
        let a: f64 = substream(7, 3).gen();
        let b: f64 = substream(7, 3).gen();
        let c: f64 = substream(7, 4).gen();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn accumulation_independent_of_thread_count() {
        let f = |i: usize, acc: &mut [f64]| {
            acc[0] += (i as f64).sqrt();
            acc[1] += 1.0 / (1.0 + i as f64);
        };
        let a = par_accumulate(10_000, 2, f);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| par_accumulate(10_000, 2, f));
        assert_eq!(a, b);
        assert!((a[1] - (1..=10_000).map(|k| 1.0 / k as f64).sum::<f64>()).abs() < 1e-10);
    }

    #[test]
    fn quantile_interpolates() {
        let xs = [0.0, 1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&xs, 0.5), 2.0);
        assert!((quantile(&xs, 0.1) - 0.4).abs() < 1e-15);
    }
}
