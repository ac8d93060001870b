use thiserror::Error;

/// Errors raised by the pricing, calibration and hedging routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("quote end dates must be strictly increasing (quote {index} ends at {end})")]
    NonMonotoneQuotes { index: usize, end: f64 },

    #[error("bootstrap cannot produce a positive discount factor at pillar {pillar} (t = {time})")]
    NonPositiveDiscount { pillar: usize, time: f64 },

    #[error("time {s} precedes {t}")]
    TimeOrder { t: f64, s: f64 },

    #[error("exercise time {t} is not before the final payment date {end}")]
    ExerciseAfterEnd { t: f64, end: f64 },

    #[error("annuity vanishes at exercise time {0}")]
    ZeroAnnuity(f64),

    #[error("root not bracketed on [{lo}, {hi}]: f(lo) = {f_lo}, f(hi) = {f_hi}")]
    RootNotBracketed { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },

    #[error("time {t} outside grid [{start}, {end}]")]
    OutsideGrid { t: f64, start: f64, end: f64 },

    #[error("maturity grid too coarse: {points} points, at least {min} required")]
    GridTooCoarse { points: usize, min: usize },

    #[error("quadrature density mode requires a flat random housing model")]
    QuadratureUnsupported,

    #[error("series is not mean-reverting: autoregressive coefficient {0}")]
    NotMeanReverting(f64),

    #[error("logistic fit did not converge after {iterations} iterations (gradient norm {gradient_norm:e})")]
    NoConvergence { iterations: usize, gradient_norm: f64 },

    #[error("quasi-complete separation detected in logistic fit")]
    Separation,

    #[error("all hedge instrument Greeks are zero")]
    DegenerateInstruments,

    #[error("eigen decomposition failed for a Gamma mismatch matrix")]
    EigenFailure,

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
