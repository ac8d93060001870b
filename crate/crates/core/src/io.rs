//! CSV readers and writers for quotes, schedules, scenarios, densities,
//! valuation series, hedge strategies, shock reports and calibration data.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::calibration::HmObservation;
use crate::curve::{DiscountCurve, SwapQuote};
use crate::epor::EporValuation;
use crate::error::Result;
use crate::hedging::{shock_label, ShockReport};
use crate::housing::HousingScenario;
use crate::instruments::AmortizingSwap;
use crate::relocation::RelocationDensityResult;

fn read_rows<R: Read, T: for<'de> Deserialize<'de>>(input: R) -> Result<Vec<T>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

fn write_rows<W: Write, T: Serialize>(output: W, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_writer(output);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct QuoteRow {
    end_years: f64,
    par_rate: f64,
    frequency: u32,
}

pub fn read_quotes<R: Read>(input: R) -> Result<Vec<SwapQuote>> {
    let rows: Vec<QuoteRow> = read_rows(input)?;
    if rows.is_empty() {
        return Err(crate::error::invalid("quote file has no rows"));
    }
    Ok(rows.into_iter().map(|r| SwapQuote::new(r.end_years, r.par_rate, r.frequency)).collect())
}

pub fn write_quotes<W: Write>(output: W, quotes: &[SwapQuote]) -> Result<()> {
    write_rows(output, quotes.iter().map(|q| QuoteRow { end_years: q.end, par_rate: q.par_rate, frequency: q.frequency }))
}

pub fn write_curve<W: Write>(output: W, curve: &DiscountCurve) -> Result<()> {
    #[derive(Serialize)]
    struct Row {
        pillar_time: f64,
        discount: f64,
    }
    let d = curve.pillar_discounts();
    write_rows(output, curve.pillar_times().iter().zip(d).map(|(&pillar_time, discount)| Row { pillar_time, discount }))
}

#[derive(Debug, Serialize, Deserialize)]
struct ScheduleRow {
    date: f64,
    notional: f64,
}

/// Payment dates in years with the notional accruing over the period that
/// ends on each date.
pub fn read_schedule<R: Read>(input: R, fixed_rate: f64) -> Result<AmortizingSwap> {
    let rows: Vec<ScheduleRow> = read_rows(input)?;
    AmortizingSwap::custom(rows.iter().map(|r| r.date).collect(), rows.iter().map(|r| r.notional).collect(), fixed_rate)
}

pub fn write_schedule<W: Write>(output: W, swap: &AmortizingSwap) -> Result<()> {
    let rows = swap.payment_dates().iter().zip(swap.period_notionals()).map(|(&date, &notional)| ScheduleRow { date, notional });
    write_rows(output, rows)
}

pub fn write_scenarios<W: Write>(output: W, scenarios: &[HousingScenario]) -> Result<()> {
    #[derive(Serialize)]
    struct Row {
        scenario_id: usize,
        time: f64,
        h: f64,
    }
    let rows = scenarios
        .iter()
        .enumerate()
        .flat_map(|(i, s)| s.times.iter().zip(&s.values).map(move |(&time, &h)| Row { scenario_id: i, time, h }));
    write_rows(output, rows)
}

pub fn write_density<W: Write>(output: W, d: &RelocationDensityResult) -> Result<()> {
    #[derive(Serialize)]
    struct Row {
        #[serde(rename = "T")]
        t: f64,
        expected_density: f64,
        std_err: f64,
    }
    let rows = (0..d.times.len()).map(|k| Row { t: d.times[k], expected_density: d.expected_density[k], std_err: d.std_err[k] });
    write_rows(output, rows)
}

pub fn write_integrand<W: Write>(output: W, v: &EporValuation) -> Result<()> {
    #[derive(Serialize)]
    struct Row {
        #[serde(rename = "T")]
        t: f64,
        #[serde(rename = "C")]
        c: f64,
        expected_density: f64,
        integrand: f64,
    }
    let rows = v.integrand.iter().map(|p| Row { t: p.maturity, c: p.swaption, expected_density: p.density, integrand: p.integrand });
    write_rows(output, rows)
}

/// One swaption leg as exported to and read back from strategy files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrategyRow {
    pub range_lo: f64,
    pub range_hi: f64,
    pub maturity: f64,
    pub weight: f64,
}

pub fn read_strategy<R: Read>(input: R) -> Result<Vec<StrategyRow>> {
    let rows: Vec<StrategyRow> = read_rows(input)?;
    if rows.is_empty() {
        return Err(crate::error::invalid("strategy file has no rows"));
    }
    Ok(rows)
}

pub fn write_strategy<W: Write>(output: W, rows: &[StrategyRow]) -> Result<()> {
    write_rows(output, rows)
}

/// Weight of the calibrating par swap ending at `quote_end`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrectionRow {
    pub quote_end: f64,
    pub weight: f64,
}

pub fn read_corrections<R: Read>(input: R) -> Result<Vec<CorrectionRow>> {
    read_rows(input)
}

pub fn write_corrections<W: Write>(output: W, rows: &[CorrectionRow]) -> Result<()> {
    write_rows(output, rows)
}

/// Shock rows with ES and loss changes in basis points of the notional.
pub fn write_shock_report<W: Write>(output: W, report: &ShockReport, notional: f64) -> Result<()> {
    #[derive(Serialize)]
    struct Row {
        shock_vector: String,
        es_1pct: f64,
        prob_loss: f64,
    }
    let rows = report.outcomes.iter().map(|o| Row {
        shock_vector: shock_label(&o.shock),
        es_1pct: o.es / notional * 1e4,
        prob_loss: o.prob_loss,
    });
    write_rows(output, rows)
}

pub fn write_oracle<W: Write>(output: W, price_bps: f64, se_bps: f64, n_paths: usize) -> Result<()> {
    #[derive(Serialize)]
    struct Row {
        price_bps: f64,
        se_bps: f64,
        n_paths: usize,
    }
    write_rows(output, [Row { price_bps, se_bps, n_paths }])
}

pub fn read_observations<R: Read>(input: R) -> Result<Vec<HmObservation>> {
    let rows: Vec<HmObservation> = read_rows(input)?;
    if rows.is_empty() {
        return Err(crate::error::invalid("observation file has no rows"));
    }
    Ok(rows)
}

pub fn write_observations<W: Write>(output: W, obs: &[HmObservation]) -> Result<()> {
    let mut w = csv::Writer::from_writer(output);
    w.write_record(["month", "h_frac", "p_frac", "exposures"])?;
    for o in obs {
        let e = o.exposures.map(|e| e.to_string()).unwrap_or_default();
        w.write_record([o.month.clone(), o.h_frac.to_string(), o.p_frac.to_string(), e])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::flat_par_curve;

    #[test]
    fn quotes_and_schedule_round_trip() {
        let q = vec![SwapQuote::new(1.0, 0.02, 1), SwapQuote::new(4.0, 0.025, 2)];
        let mut buf = Vec::new();
        write_quotes(&mut buf, &q).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap().lines().next().unwrap(), "end_years,par_rate,frequency");
        assert_eq!(read_quotes(buf.as_slice()).unwrap(), q);

        let s = AmortizingSwap::linear(5.0, 2, 0.03, 10_000.0).unwrap();
        let mut buf = Vec::new();
        write_schedule(&mut buf, &s).unwrap();
        let back = read_schedule(buf.as_slice(), 0.03).unwrap();
        assert_eq!(back.payment_dates(), s.payment_dates());
        assert_eq!(back.period_notionals(), s.period_notionals());
    }

    #[test]
    fn observations_with_and_without_exposures() {
        let text = "month,h_frac,p_frac,exposures\n2013-01,0.004,0.003,1000\n2013-02, 0.005 ,0.002,\n";
        let obs = read_observations(text.as_bytes()).unwrap();
        assert_eq!(obs[0].exposures, Some(1000));
        assert_eq!(obs[1].exposures, None);
        assert_eq!(obs[1].h_frac, 0.005);
        let short = "month,h_frac,p_frac\n2013-01,0.004,0.003\n";
        assert_eq!(read_observations(short.as_bytes()).unwrap()[0].exposures, None);
        let mut buf = Vec::new();
        write_observations(&mut buf, &obs).unwrap();
        assert_eq!(read_observations(buf.as_slice()).unwrap(), obs);
        assert!(read_observations("month,h_frac,p_frac\n".as_bytes()).is_err());
        assert!(read_observations("".as_bytes()).is_err());
        assert!(read_observations("month,h_frac\n2013-01,0.1\n".as_bytes()).is_err());
    }

    #[test]
    fn curve_dump_header() {
        let c = flat_par_curve(0.03, &[1.0, 3.0]).unwrap();
        let mut buf = Vec::new();
        write_curve(&mut buf, &c).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("pillar_time,discount\n"));
        assert_eq!(s.lines().count(), 1 + c.pillar_times().len());
    }
}
