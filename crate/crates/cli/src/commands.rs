use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use epor_core::calibration::{self, HmObservation};
use epor_core::hedging::{default_shock_grid, shock_label, HedgeConfig, HedgeContext, HedgeKind, HedgeStrategy, MaturityRule, ScenarioSet};
use epor_core::io::{self, CorrectionRow, StrategyRow};
use epor_core::oracle::{swaption_mc, Oracle, OracleConfig};
use epor_core::{
    AmortizingSwap, DensityMode, DiscountCurve, Distribution, Epor, GridSpec, HousingModel, HullWhite, IntensityParams, Marginal, OuParams,
    Side, SwapQuote,
};
use serde::Serialize;

use crate::config::{DensityKind, HmKind, RunConfig, SwapKind};
use crate::CliError;

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, CliError> {
    let p = dir.join(name);
    File::create(&p).map(BufWriter::new).map_err(|e| CliError::Input(format!("cannot write {}: {e}", p.display())))
}

fn open(path: &Path) -> Result<File, CliError> {
    File::open(path).map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))
}

fn write_summary<T: Serialize>(dir: &Path, value: &T) -> Result<(), CliError> {
    let text = toml::to_string(value).map_err(|e| CliError::Input(e.to_string()))?;
    std::fs::write(dir.join("summary.toml"), text)?;
    Ok(())
}

fn write_config(cfg: &RunConfig, dir: &Path) -> Result<(), CliError> {
    std::fs::write(dir.join("config.toml"), cfg.to_toml())?;
    Ok(())
}

fn quotes(cfg: &RunConfig) -> Result<Vec<SwapQuote>, CliError> {
    if let Some(p) = &cfg.curve.quotes_file {
        return Ok(io::read_quotes(open(p)?)?);
    }
    let c = &cfg.curve;
    if c.ends.is_empty() {
        return Err(CliError::Input("curve.ends is empty".into()));
    }
    let rate = |i: usize| match c.par_rates.len() {
        1 => Ok(c.par_rates[0]),
        n if n == c.ends.len() => Ok(c.par_rates[i]),
        _ => Err(CliError::Input("curve.par_rates needs one rate or one per end date".into())),
    };
    c.ends.iter().enumerate().map(|(i, &e)| Ok(SwapQuote::new(e, rate(i)?, c.frequency))).collect()
}

fn hull_white(cfg: &RunConfig) -> Result<HullWhite, CliError> {
    let curve = DiscountCurve::bootstrap(&quotes(cfg)?)?;
    Ok(HullWhite::new(cfg.hw.mean_reversion, cfg.hw.volatility, curve)?)
}

fn swap(cfg: &RunConfig) -> Result<AmortizingSwap, CliError> {
    let s = &cfg.swap;
    let swap = match s.kind {
        SwapKind::Bullet => AmortizingSwap::bullet(s.end_years, s.frequency, s.fixed_rate, s.initial_notional)?,
        SwapKind::Linear => AmortizingSwap::linear(s.end_years, s.frequency, s.fixed_rate, s.initial_notional)?,
        SwapKind::Custom => {
            let p = s.schedule_file.as_ref().ok_or_else(|| CliError::Input("swap.kind = \"custom\" needs swap.schedule_file".into()))?;
            io::read_schedule(open(p)?, s.fixed_rate)?
        }
    };
    Ok(swap.with_convention(s.convention))
}

fn intensity(cfg: &RunConfig) -> Result<IntensityParams, CliError> {
    let r = &cfg.reloc;
    let mut p = IntensityParams::new([r.beta0, r.beta1, r.beta2], r.dt_ref)?;
    p.mapping = r.mapping;
    Ok(p)
}

fn housing(cfg: &RunConfig, horizon: f64) -> Result<HousingModel, CliError> {
    let h = &cfg.hm;
    let model = match h.kind {
        HmKind::FlatRandom => HousingModel::FlatRandom(Marginal::new(h.distribution, h.mean, h.variance)?),
        HmKind::LinearRamp => HousingModel::LinearRamp { terminal: Marginal::new(h.distribution, h.mean, h.variance)?, horizon },
        HmKind::Ou => HousingModel::Ou(OuParams::with_trend(h.mean, h.variance, h.ou.alpha, h.ou.eta, h.trend, horizon)),
    };
    model.validate()?;
    Ok(model)
}

fn density_mode(cfg: &RunConfig) -> DensityMode {
    match (cfg.hm.kind, cfg.hm.density) {
        (HmKind::FlatRandom, DensityKind::Quadrature) => DensityMode::Quadrature { points: cfg.hm.quadrature_points },
        _ => DensityMode::MonteCarlo { scenarios: cfg.hm.paths, seed: cfg.hm.seed },
    }
}

struct Setup {
    epor: Epor,
    model: HousingModel,
}

fn setup(cfg: &RunConfig) -> Result<Setup, CliError> {
    let hw = hull_white(cfg)?;
    let swap = swap(cfg)?;
    let horizon = swap.end();
    let spec = GridSpec { max_step: cfg.reloc.grid_step, min_points: cfg.reloc.min_points };
    let epor = Epor::new(hw, swap, intensity(cfg)?, horizon, spec)?;
    let model = housing(cfg, horizon)?;
    Ok(Setup { epor, model })
}

#[derive(Serialize)]
struct ValuationSummary {
    strike: f64,
    value_bps: f64,
    baseline_bps: f64,
    adjustment_bps: f64,
    ci10_bps: f64,
    ci90_bps: f64,
    relative_baseline_gap: f64,
}

#[derive(Serialize)]
struct PriceSummary {
    command: &'static str,
    notional: f64,
    horizon: f64,
    grid_points: usize,
    density_mass: f64,
    survival_at_horizon: f64,
    valuation: Vec<ValuationSummary>,
}

pub fn price(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let Setup { epor, model } = setup(cfg)?;
    let strikes = if cfg.pricing.strikes.is_empty() { vec![cfg.swap.fixed_rate] } else { cfg.pricing.strikes.clone() };
    let mode = density_mode(cfg);
    let density = epor.expected_density(&model, mode)?;
    io::write_density(create(out, "density.csv")?, &density)?;
    io::write_curve(create(out, "curve.csv")?, epor.hw.curve())?;
    let mut rows = Vec::new();
    for &k in &strikes {
        let e = epor.with_swap(epor.swap.with_fixed_rate(k))?;
        let v = e.valuation(&model, mode, cfg.hm.paths, cfg.hm.seed)?;
        if cfg.pricing.series {
            io::write_integrand(create(out, &format!("series_K{k:.4}.csv"))?, &v)?;
        }
        rows.push(ValuationSummary {
            strike: k,
            value_bps: v.bps(v.value),
            baseline_bps: v.bps(v.baseline),
            adjustment_bps: v.bps(v.adjustment),
            ci10_bps: v.bps(v.quantile_band.0),
            ci90_bps: v.bps(v.quantile_band.1),
            relative_baseline_gap: if v.value != 0.0 { (1.0 - v.baseline / v.value).abs() } else { 0.0 },
        });
    }
    let mut w = csv::Writer::from_writer(create(out, "valuation.csv")?);
    for r in &rows {
        w.serialize(r).map_err(|e| CliError::Input(e.to_string()))?;
    }
    w.flush()?;
    write_config(cfg, out)?;
    write_summary(
        out,
        &PriceSummary {
            command: "price",
            notional: epor.notional(),
            horizon: epor.grid.horizon(),
            grid_points: epor.grid.len(),
            density_mass: density.mass,
            survival_at_horizon: density.survival_at_end(),
            valuation: rows,
        },
    )
}

fn hedge_context(cfg: &RunConfig, setup: Setup) -> Result<(HedgeContext, HousingModel), CliError> {
    let h = &cfg.hedge;
    let hc = HedgeConfig {
        ranges: h.j,
        k: h.k,
        k_vol: h.k_vol,
        k_eig: h.k_eig,
        alpha_opt: h.alpha_opt,
        unit_bp: h.unit_bp,
        delta_bump_bp: h.bump_bp,
        gamma_bump_bp: h.gamma_bump_bp,
        restarts: h.restarts,
    };
    let d = setup.epor.expected_density(&setup.model, density_mode(cfg))?;
    Ok((HedgeContext::new(setup.epor, d.expected_density, hc)?, setup.model))
}

fn scenarios(cfg: &RunConfig, ctx: &HedgeContext, model: &HousingModel) -> ScenarioSet {
    ScenarioSet { densities: ctx.epor.scenario_densities(model, cfg.hedge.scenarios, cfg.hm.seed) }
}

fn quote_ends(ctx: &HedgeContext) -> Vec<f64> {
    ctx.epor.hw.curve().quotes().iter().map(|q| q.end).collect()
}

#[derive(Serialize)]
struct LegSummary {
    range_lo: f64,
    range_hi: f64,
    maturity: f64,
    weight: f64,
    price_bps: f64,
    range_value_bps: f64,
    range_objective: f64,
}

#[derive(Serialize)]
struct HedgeSummary {
    command: &'static str,
    kind: HedgeKind,
    ranges: usize,
    value_bps: f64,
    cost_bps: f64,
    cost_to_value: f64,
    objective: f64,
    vol_penalty: f64,
    converged: bool,
    greek_unit_bp: f64,
    diagnostics: Vec<String>,
    legs: Vec<LegSummary>,
}

fn build_strategy(cfg: &RunConfig, ctx: &HedgeContext, model: &HousingModel) -> Result<HedgeStrategy, CliError> {
    let j = cfg.hedge.j;
    Ok(match cfg.hedge.kind {
        HedgeKind::Global => ctx.hedge_global(j)?,
        HedgeKind::FxrMim => ctx.hedge_fxr(j, MaturityRule::Midpoint)?,
        HedgeKind::FxrOpm => ctx.hedge_fxr(j, MaturityRule::Optimal)?,
        HedgeKind::OprMim => ctx.hedge_opr(j)?,
        HedgeKind::Eigen => {
            let base = ctx.hedge_opr(j)?;
            ctx.hedge_eigen(&base, &scenarios(cfg, ctx, model))?
        }
    })
}

pub fn hedge(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let (ctx, model) = hedge_context(cfg, setup(cfg)?)?;
    let s = build_strategy(cfg, &ctx, &model)?;
    let rows: Vec<StrategyRow> = s
        .legs
        .iter()
        .map(|l| StrategyRow { range_lo: l.range_lo, range_hi: l.range_hi, maturity: l.maturity, weight: l.weight })
        .collect();
    io::write_strategy(create(out, "strategy.csv")?, &rows)?;
    let ends = quote_ends(&ctx);
    let corr: Vec<CorrectionRow> = s.corrections.iter().map(|c| CorrectionRow { quote_end: ends[c.quote], weight: c.weight }).collect();
    let corr_path = out.join("corrections.csv");
    if corr.is_empty() {
        if corr_path.exists() {
            std::fs::remove_file(&corr_path)?;
        }
    } else {
        io::write_corrections(create(out, "corrections.csv")?, &corr)?;
    }

    let target = ctx.target();
    let pos = ctx.position_greeks(&s)?;
    let mut w = csv::Writer::from_writer(create(out, "delta.csv")?);
    w.write_record(["quote_end", "epor", "hedge"]).map_err(|e| CliError::Input(e.to_string()))?;
    for (i, e) in ends.iter().enumerate() {
        w.write_record([e.to_string(), target.delta[i].to_string(), pos.delta[i].to_string()]).map_err(|e| CliError::Input(e.to_string()))?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_writer(create(out, "gamma.csv")?);
    w.write_record(["quote_i", "quote_j", "epor", "hedge"]).map_err(|e| CliError::Input(e.to_string()))?;
    for i in 0..ends.len() {
        for j in 0..ends.len() {
            w.write_record([ends[i].to_string(), ends[j].to_string(), target.gamma[(i, j)].to_string(), pos.gamma[(i, j)].to_string()])
                .map_err(|e| CliError::Input(e.to_string()))?;
        }
    }
    w.flush()?;

    let e = &ctx.epor;
    let value = ctx.value();
    let legs = s
        .legs
        .iter()
        .map(|l| LegSummary {
            range_lo: l.range_lo,
            range_hi: l.range_hi,
            maturity: l.maturity,
            weight: l.weight,
            price_bps: e.to_bps(l.price),
            range_value_bps: e.to_bps(ctx.range_value(l.range_lo, l.range_hi)),
            range_objective: l.objective,
        })
        .collect();
    write_config(cfg, out)?;
    write_summary(
        out,
        &HedgeSummary {
            command: "hedge",
            kind: s.kind,
            ranges: s.legs.len(),
            value_bps: e.to_bps(value),
            cost_bps: e.to_bps(s.cost),
            cost_to_value: s.cost / value,
            objective: s.objective,
            vol_penalty: s.vol_penalty,
            converged: s.converged,
            greek_unit_bp: cfg.hedge.unit_bp,
            diagnostics: s.diagnostics.clone(),
            legs,
        },
    )?;
    if !s.converged {
        return Err(CliError::Optimizer("range optimization did not converge; best partition written".into()));
    }
    Ok(())
}

#[derive(Serialize)]
struct ShockRowSummary {
    shock: String,
    mean_bps: f64,
    es_bps: f64,
    prob_loss: f64,
}

#[derive(Serialize)]
struct ShockSummary {
    command: &'static str,
    kind: HedgeKind,
    scenarios: usize,
    alpha_es: f64,
    largest: Vec<ShockRowSummary>,
}

pub fn shock(cfg: &RunConfig, strategy: Option<PathBuf>, out: &Path) -> Result<(), CliError> {
    let path = strategy.or_else(|| cfg.shock.strategy.clone()).unwrap_or_else(|| out.join("strategy.csv"));
    if !path.is_file() {
        return Err(CliError::Input(format!("strategy file {} not found; run `epor hedge` first", path.display())));
    }
    let rows = io::read_strategy(open(&path)?)?;
    let corr_path = path.with_file_name("corrections.csv");
    let corr_rows = if corr_path.is_file() { io::read_corrections(open(&corr_path)?)? } else { Vec::new() };

    let (ctx, model) = hedge_context(cfg, setup(cfg)?)?;
    let ends = quote_ends(&ctx);
    let legs: Vec<(f64, f64, f64, f64)> = rows.iter().map(|r| (r.range_lo, r.range_hi, r.maturity, r.weight)).collect();
    let corrections = corr_rows
        .iter()
        .map(|c| {
            ends.iter()
                .position(|&e| (e - c.quote_end).abs() <= 1e-9)
                .map(|i| (i, c.weight))
                .ok_or_else(|| CliError::Input(format!("correction at {} matches no curve quote", c.quote_end)))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let s = ctx.rebuild(cfg.hedge.kind, &legs, &corrections)?;
    let set = scenarios(cfg, &ctx, &model);
    let grid = cfg.shock.grid.clone().unwrap_or_else(|| default_shock_grid(ends.len()));
    let report = ctx.shock_analysis(&s, &set, &grid, cfg.report.alpha_es)?;
    let n0 = ctx.epor.notional();
    io::write_shock_report(create(out, "shock.csv")?, &report, n0)?;

    let mut w = csv::Writer::from_writer(create(out, "shock_distribution.csv")?);
    w.write_record(["shock_vector", "scenario", "delta_v_bps"]).map_err(|e| CliError::Input(e.to_string()))?;
    for o in &report.outcomes {
        let label = shock_label(&o.shock);
        for (i, x) in o.changes.iter().enumerate() {
            w.write_record([label.clone(), i.to_string(), (x / n0 * 1e4).to_string()]).map_err(|e| CliError::Input(e.to_string()))?;
        }
    }
    w.flush()?;
    let largest = report
        .largest(2)
        .into_iter()
        .map(|i| {
            let o = &report.outcomes[i];
            ShockRowSummary { shock: shock_label(&o.shock), mean_bps: o.mean / n0 * 1e4, es_bps: o.es / n0 * 1e4, prob_loss: o.prob_loss }
        })
        .collect();
    write_config(cfg, out)?;
    write_summary(out, &ShockSummary { command: "shock", kind: s.kind, scenarios: set.densities.len(), alpha_es: report.alpha, largest })
}

#[derive(Serialize)]
struct OracleRow {
    strike: f64,
    price_bps: f64,
    se_bps: f64,
    n_paths: usize,
    quadrature_bps: f64,
    z: f64,
}

#[derive(Serialize)]
struct SwaptionRow {
    maturity: f64,
    jamshidian: f64,
    mc: f64,
    se: f64,
    z: f64,
}

#[derive(Serialize)]
struct OracleSummary {
    command: &'static str,
    within_3se: bool,
    swaptions_within_3se: bool,
    max_abs_z: f64,
    warnings: Vec<String>,
}

pub fn oracle_check(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let Setup { epor, model } = setup(cfg)?;
    let oc = OracleConfig { paths: cfg.oracle.paths, seed: cfg.oracle.seed, grid_step: cfg.oracle.grid_step };
    let density = epor.expected_density(&model, density_mode(cfg))?;
    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    let strikes = if cfg.oracle.strikes.is_empty() { vec![cfg.swap.fixed_rate] } else { cfg.oracle.strikes.clone() };
    for &k in &strikes {
        let e = epor.with_swap(epor.swap.with_fixed_rate(k))?;
        let v = e.price(&density)?;
        let oracle = Oracle { hw: &e.hw, swap: &e.swap, model: &model, intensity: &e.intensity, horizon: e.grid.horizon() };
        let est = oracle.price(oc)?;
        warnings.extend(est.warnings.iter().map(|w| format!("K = {k}: {w}")));
        let z = if est.std_err > 0.0 { (v - est.price) / est.std_err } else { 0.0 };
        rows.push(OracleRow { strike: k, price_bps: e.to_bps(est.price), se_bps: e.to_bps(est.std_err), n_paths: est.n_paths, quadrature_bps: e.to_bps(v), z });
    }
    let mut w = csv::Writer::from_writer(create(out, "oracle.csv")?);
    for r in &rows {
        w.serialize(r).map_err(|e| CliError::Input(e.to_string()))?;
    }
    w.flush()?;

    let mut sw = Vec::new();
    for &t in &cfg.mc.maturities {
        let j = epor.swap.receiver_swaption(&epor.hw, t, Side::Right)?;
        let (m, se) = swaption_mc(&epor.hw, &epor.swap, t, cfg.mc.paths, cfg.mc.seed)?;
        sw.push(SwaptionRow { maturity: t, jamshidian: j, mc: m, se, z: if se > 0.0 { (j - m) / se } else { 0.0 } });
    }
    if !sw.is_empty() {
        let mut w = csv::Writer::from_writer(create(out, "swaption_mc.csv")?);
        for r in &sw {
            w.serialize(r).map_err(|e| CliError::Input(e.to_string()))?;
        }
        w.flush()?;
    }
    write_config(cfg, out)?;
    let max_abs_z = rows.iter().map(|r| r.z.abs()).fold(0.0, f64::max);
    write_summary(
        out,
        &OracleSummary {
            command: "oracle-check",
            within_3se: max_abs_z <= 3.0,
            swaptions_within_3se: sw.iter().all(|r| r.z.abs() <= 3.0),
            max_abs_z,
            warnings,
        },
    )
}

#[derive(Serialize)]
struct MarginalSummary {
    distribution: Distribution,
    mean: f64,
    variance: f64,
    /// `(mu, sigma)` of the log for the lognormal law, `(shift, rate)` for
    /// the shifted exponential.
    #[serde(skip_serializing_if = "Option::is_none")]
    params: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

#[derive(Serialize)]
struct CalibrationSummary {
    command: &'static str,
    source: String,
    report: calibration::CalibrationReport,
    distributions: Vec<MarginalSummary>,
}

pub fn calibrate(cfg: &RunConfig, data: Option<PathBuf>, out: &Path) -> Result<(), CliError> {
    let data = data.or_else(|| cfg.calibration.data.clone());
    let (obs, source): (Vec<HmObservation>, String) = match data {
        Some(p) => (io::read_observations(open(&p)?)?, p.display().to_string()),
        None => {
            let c = &cfg.calibration;
            let horizon = c.months as f64 / 12.0;
            let model = housing(cfg, horizon)?;
            let obs = calibration::synth_generate(&intensity(cfg)?, &model, c.months, c.borrowers, c.seed)?;
            io::write_observations(create(out, "hm_data.csv")?, &obs)?;
            (obs, format!("synthetic ({} months, {} borrowers, seed {})", c.months, c.borrowers, c.seed))
        }
    };
    let report = calibration::calibrate(&obs)?;
    let distributions = [Distribution::Normal, Distribution::Lognormal, Distribution::ShiftedExponential]
        .into_iter()
        .map(|d| match calibration::moment_fit(&obs, d) {
            Ok(m) => MarginalSummary {
                distribution: d,
                mean: m.mean,
                variance: m.variance,
                params: match d {
                    Distribution::Normal => None,
                    Distribution::Lognormal => Some(m.log_params().into()),
                    Distribution::ShiftedExponential => Some(m.exp_params().into()),
                },
                error: None,
            },
            Err(e) => MarginalSummary { distribution: d, mean: report.mean, variance: report.variance, params: None, error: Some(e.to_string()) },
        })
        .collect();
    let failed = report.logistic_error.clone();
    write_config(cfg, out)?;
    write_summary(out, &CalibrationSummary { command: "calibrate", source, report, distributions })?;
    match failed {
        Some(e) => Err(CliError::Calibration(format!("logistic intensity fit failed: {e}"))),
        None => Ok(()),
    }
}
