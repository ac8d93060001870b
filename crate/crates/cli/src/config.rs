//! Run configuration: named presets merged under an optional TOML file.

use std::path::{Path, PathBuf};

use epor_core::hedging::HedgeKind;
use epor_core::housing::{ACTIVITY_VARIANCE, MEAN_ACTIVITY, OU_ALPHA, OU_ETA};
use epor_core::relocation::{BETA_STAR, MONTH};
use epor_core::{AccrualConvention, Distribution, IntensityMapping, Trend};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub curve: CurveConfig,
    pub hw: HwConfig,
    pub mc: McConfig,
    pub swap: SwapConfig,
    pub hm: HmConfig,
    pub reloc: RelocConfig,
    pub pricing: PricingConfig,
    pub hedge: HedgeSection,
    pub shock: ShockConfig,
    pub report: ReportConfig,
    pub oracle: OracleSection,
    pub calibration: CalibrationSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            curve: CurveConfig::default(),
            hw: HwConfig::default(),
            mc: McConfig::default(),
            swap: SwapConfig::default(),
            hm: HmConfig::default(),
            reloc: RelocConfig::default(),
            pricing: PricingConfig::default(),
            hedge: HedgeSection::default(),
            shock: ShockConfig::default(),
            report: ReportConfig::default(),
            oracle: OracleSection::default(),
            calibration: CalibrationSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CurveConfig {
    /// Quote end dates in years.
    pub ends: Vec<f64>,
    /// One par rate per end date, or a single rate for all of them.
    pub par_rates: Vec<f64>,
    pub frequency: u32,
    /// CSV `end_years,par_rate,frequency`; replaces the inline quotes.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quotes_file: Option<PathBuf>,
}

impl Default for CurveConfig {
    fn default() -> Self {
        Self { ends: vec![1.0, 3.0, 5.0, 7.0, 10.0], par_rates: vec![0.03], frequency: 1, quotes_file: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HwConfig {
    pub mean_reversion: f64,
    pub volatility: f64,
}

impl Default for HwConfig {
    fn default() -> Self {
        Self { mean_reversion: 0.05, volatility: 0.01 }
    }
}

/// Short-rate Monte Carlo cross-check of the swaption formula.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McConfig {
    pub paths: usize,
    pub seed: u64,
    /// Exercise dates checked by `oracle-check`; empty skips the check.
    pub maturities: Vec<f64>,
}

impl Default for McConfig {
    fn default() -> Self {
        Self { paths: 1_000_000, seed: 11, maturities: vec![1.0, 5.0, 9.0] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SwapKind {
    Bullet,
    Linear,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SwapConfig {
    pub kind: SwapKind,
    pub fixed_rate: f64,
    pub frequency: u32,
    pub end_years: f64,
    pub initial_notional: f64,
    pub convention: AccrualConvention,
    /// CSV `date,notional` for `kind = "custom"`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub schedule_file: Option<PathBuf>,
}

impl Default for SwapConfig {
    fn default() -> Self {
        Self {
            kind: SwapKind::Bullet,
            fixed_rate: 0.03,
            frequency: 1,
            end_years: 10.0,
            initial_notional: 10_000.0,
            convention: AccrualConvention::default(),
            schedule_file: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HmKind {
    FlatRandom,
    LinearRamp,
    Ou,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityKind {
    Quadrature,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OuSection {
    pub alpha: f64,
    pub eta: f64,
}

impl Default for OuSection {
    fn default() -> Self {
        Self { alpha: OU_ALPHA, eta: OU_ETA }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HmConfig {
    pub kind: HmKind,
    pub distribution: Distribution,
    pub mean: f64,
    pub variance: f64,
    pub ou: OuSection,
    pub trend: Trend,
    /// Scenario count for path densities and scenario statistics.
    pub paths: usize,
    pub seed: u64,
    pub density: DensityKind,
    pub quadrature_points: usize,
}

impl Default for HmConfig {
    fn default() -> Self {
        Self {
            kind: HmKind::Ou,
            distribution: Distribution::Normal,
            mean: MEAN_ACTIVITY,
            variance: ACTIVITY_VARIANCE,
            ou: OuSection::default(),
            trend: Trend::Flat,
            paths: 20_000,
            seed: 1,
            density: DensityKind::MonteCarlo,
            quadrature_points: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RelocConfig {
    pub beta0: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub dt_ref: f64,
    pub mapping: IntensityMapping,
    /// Largest maturity-grid step in years.
    pub grid_step: f64,
    pub min_points: usize,
}

impl Default for RelocConfig {
    fn default() -> Self {
        Self {
            beta0: BETA_STAR[0],
            beta1: BETA_STAR[1],
            beta2: BETA_STAR[2],
            dt_ref: MONTH,
            mapping: IntensityMapping::Linear,
            grid_step: 1.0 / 48.0,
            min_points: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PricingConfig {
    /// Contract rates of the strike sweep; `swap.fixed_rate` is priced when empty.
    pub strikes: Vec<f64>,
    /// Write the per-maturity integrand series for each strike.
    pub series: bool,
}

impl Default for PricingConfig {
    fn default() -> Self {
        Self { strikes: vec![0.025, 0.0275, 0.03, 0.0325, 0.035], series: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HedgeSection {
    pub kind: HedgeKind,
    #[serde(rename = "J")]
    pub j: usize,
    pub k: f64,
    pub k_vol: f64,
    pub k_eig: f64,
    pub alpha_opt: f64,
    /// Delta bump in basis points.
    pub bump_bp: f64,
    pub gamma_bump_bp: f64,
    /// Greeks enter the objectives per this many basis points.
    pub unit_bp: f64,
    pub restarts: usize,
    /// Housing scenarios behind the actuarial penalty and shock reports.
    pub scenarios: usize,
}

impl Default for HedgeSection {
    fn default() -> Self {
        Self {
            kind: HedgeKind::OprMim,
            j: 3,
            k: 1.0,
            k_vol: 0.1,
            k_eig: 3.0,
            alpha_opt: 0.1,
            bump_bp: 1.0,
            gamma_bump_bp: 5.0,
            unit_bp: 1.0,
            restarts: 8,
            scenarios: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShockConfig {
    /// Per-quote shifts in bp; the full +-25 bp grid plus +-50 bp singles when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<Vec<f64>>>,
    /// Strategy CSV to shock; `<out>/strategy.csv` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub strategy: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReportConfig {
    pub alpha_es: f64,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self { alpha_es: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleSection {
    pub paths: usize,
    pub seed: u64,
    pub grid_step: f64,
    pub strikes: Vec<f64>,
}

impl Default for OracleSection {
    fn default() -> Self {
        Self { paths: 1_000_000, seed: 7, grid_step: 1.0 / 48.0, strikes: vec![0.025, 0.03, 0.035] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationSection {
    /// CSV `month,h_frac,p_frac[,exposures]`; a synthetic series is generated when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    pub months: usize,
    pub borrowers: u64,
    pub seed: u64,
}

impl Default for CalibrationSection {
    fn default() -> Self {
        Self { data: None, months: 132, borrowers: 2_000_000, seed: 5 }
    }
}

pub const PRESETS: [&str; 3] = ["bullet_baseline", "linear_baseline", "actuarial"];

pub fn preset(name: &str) -> Result<RunConfig, CliError> {
    let mut c = RunConfig::default();
    match name {
        "bullet_baseline" => {}
        "linear_baseline" => {
            c.swap.kind = SwapKind::Linear;
            c.hedge.j = 5;
            c.hedge.k_eig = 1.0;
        }
        "actuarial" => {
            c.curve.ends = vec![1.0, 4.0, 10.0];
            c.swap.kind = SwapKind::Linear;
            c.hedge.kind = HedgeKind::Eigen;
            c.hedge.j = 6;
            c.hedge.k_eig = 1.0;
        }
        other => {
            return Err(CliError::Input(format!("unknown preset `{other}` (expected one of {})", PRESETS.join(", "))));
        }
    }
    Ok(c)
}

fn merge(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_table() && v.is_table() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

/// The preset (bullet baseline by default) with the file's keys laid over
/// it. Relative paths inside the file resolve against its directory.
pub fn load(preset_name: Option<&str>, file: Option<&Path>) -> Result<RunConfig, CliError> {
    let base = preset(preset_name.unwrap_or("bullet_baseline"))?;
    let Some(path) = file else {
        return Ok(base);
    };
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    let over: toml::Value = toml::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let mut merged = toml::Value::try_from(&base).map_err(|e| CliError::Input(e.to_string()))?;
    merge(&mut merged, over);
    let mut cfg: RunConfig = merged.try_into().map_err(|e: toml::de::Error| CliError::Input(format!("{}: {e}", path.display())))?;
    let dir = path.parent().unwrap_or(Path::new("."));
    for p in [&mut cfg.curve.quotes_file, &mut cfg.swap.schedule_file, &mut cfg.shock.strategy, &mut cfg.calibration.data] {
        if let Some(rel) = p.as_mut() {
            if rel.is_relative() {
                *rel = dir.join(&*rel);
            }
        }
    }
    Ok(cfg)
}

impl RunConfig {
    /// Replaces every random seed with `seed`.
    pub fn reseed(&mut self, seed: u64) {
        self.mc.seed = seed;
        self.hm.seed = seed;
        self.oracle.seed = seed;
        self.calibration.seed = seed;
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_round_trip_through_toml() {
        for name in PRESETS {
            let c = preset(name).unwrap();
            let back: RunConfig = toml::from_str(&c.to_toml()).unwrap();
            assert_eq!(back, c, "{name}");
        }
        assert!(preset("nope").is_err());
    }

    #[test]
    fn overrides_merge_and_unknown_keys_fail() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, "[hedge]\nJ = 4\n[swap]\nfixed_rate = 0.035\nschedule_file = \"s.csv\"\n").unwrap();
        let c = load(Some("linear_baseline"), Some(&p)).unwrap();
        assert_eq!(c.hedge.j, 4);
        assert_eq!(c.hedge.k_eig, 1.0);
        assert_eq!(c.swap.kind, SwapKind::Linear);
        assert_eq!(c.swap.fixed_rate, 0.035);
        assert_eq!(c.swap.schedule_file.as_deref(), Some(dir.path().join("s.csv").as_path()));

        std::fs::write(&p, "[hedge]\nj = 4\n").unwrap();
        assert!(matches!(load(None, Some(&p)), Err(CliError::Input(_))));
        std::fs::write(&p, "colour = 1\n").unwrap();
        assert!(load(None, Some(&p)).is_err());
        std::fs::write(&p, "[hm]\nkind = \"brownian\"\n").unwrap();
        assert!(load(None, Some(&p)).is_err());
    }
}
