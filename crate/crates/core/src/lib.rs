//! Valuation and hedging of the mortgage prepayment option exercised at
//! relocation.
//!
//! The option is priced as a receiver swaption on the remaining mortgage
//! cash flows, integrated over the expected density of a relocation time
//! driven by housing-market activity. Rates follow a one-factor Hull-White
//! model fitted to a bootstrapped discount curve.

pub mod calibration;
pub mod curve;
pub mod epor;
pub mod error;
pub mod greeks;
pub mod hedging;
pub mod housing;
pub mod hullwhite;
pub mod instruments;
pub mod io;
pub mod numerics;
pub mod oracle;
pub mod relocation;
pub mod scalar;

pub use curve::{DiscountCurve, SwapQuote};
pub use oracle::{Oracle, OracleConfig, OracleEstimate};
pub use epor::{DiscreteHessian, Epor, EporValuation, GridSpec, MaturityGrid};
pub use error::{Error, Result};
pub use greeks::GreekProfile;
pub use housing::{Distribution, HousingModel, HousingScenario, Marginal, OuParams, Trend};
pub use hedging::{HedgeConfig, HedgeContext, HedgeKind, HedgeStrategy, MaturityRule, ScenarioSet, ShockReport};
pub use hullwhite::HullWhite;
pub use instruments::{AccrualConvention, AmortizingSwap, ScheduleKind, Side};
pub use relocation::{DensityMode, IntensityMapping, IntensityParams, RealizedDensity, RelocationDensityResult};
pub use scalar::Scalar;

pub type Curve64 = DiscountCurve<f64>;
pub type Curve32 = DiscountCurve<f32>;
pub type HullWhite64 = HullWhite<f64>;
pub type HullWhite32 = HullWhite<f32>;
pub type Swap64 = AmortizingSwap<f64>;
pub type Swap32 = AmortizingSwap<f32>;
pub type Intensity64 = IntensityParams<f64>;
pub type Intensity32 = IntensityParams<f32>;
pub type Hessian64 = DiscreteHessian<f64>;
pub type Hessian32 = DiscreteHessian<f32>;
