//! Ex-post evaluation on the test split: every controller under every sizing
//! method, normalized daily peaks, fleet quantiles and LCOE tables.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::battery::{simulate, BatterySpec, Policy};
use crate::economics::{
    bau_lcoe, evaluate_costs, peak_shifted_tariff, peak_shifted_tariff_fleet, CostBreakdown, CostModel, TariffModel,
};
use crate::error::{invalid, Error, Result};
use crate::mpc::{fit_forecaster, make_mpc, Forecaster, ForecasterConfig, MpcConfig, MpcSource};
use crate::optimize::{tune_rbc, DeConfig, TuneObjective};
use crate::policies::{make_rbc, RbcParams};
use crate::quantile::nearest_rank;
use crate::risk::{daily_peaks, LossArchive};
use crate::sizing::{size_prescient, size_rbc, SizingMethod, SizingOptions, SizingResult};
use crate::timeseries::PowerSeries;

/// Default quantile levels of the peak tables.
pub const DEFAULT_LEVELS: [f64; 7] = [0.05, 0.25, 0.5, 0.75, 0.9, 0.95, 0.99];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Controller {
    #[serde(rename = "rbc")]
    Rbc,
    #[serde(rename = "rbc-adv")]
    RbcAdv,
    #[serde(rename = "mpc")]
    Mpc,
    #[serde(rename = "mpc-prescient")]
    MpcPrescient,
}

impl Controller {
    pub const ALL: [Controller; 4] = [Self::Rbc, Self::RbcAdv, Self::Mpc, Self::MpcPrescient];

    pub fn name(self) -> &'static str {
        match self {
            Self::Rbc => "rbc",
            Self::RbcAdv => "rbc-adv",
            Self::Mpc => "mpc",
            Self::MpcPrescient => "mpc-prescient",
        }
    }
}

impl fmt::Display for Controller {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Controller {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown controller '{s}' (expected rbc, rbc-adv, mpc, mpc-prescient)")))
    }
}

/// How the peak-shifted tariff is calibrated on training data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TariffCalibration {
    /// Use the tariff as given.
    None,
    /// One tariff for all meters, revenue-neutral on the pooled training data.
    #[default]
    Fleet,
    /// Revenue-neutral on each meter's own training data.
    Meter,
}

/// Everything a study needs besides the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    /// Tariff before calibration.
    pub tariff: TariffModel,
    /// Grid share of the import price moved (half of it) into the peak charge, USD/kWh.
    pub grid_volumetric: f64,
    pub calibration: TariffCalibration,
    pub cost: CostModel,
    pub sizing: SizingOptions,
    pub de: DeConfig,
    /// Risk level of the adversarial RBC.
    pub alpha: f64,
    pub mpc: MpcConfig,
    pub forecaster: ForecasterConfig,
    pub controllers: Vec<Controller>,
    pub sizings: Vec<SizingMethod>,
    pub levels: Vec<f64>,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            tariff: TariffModel::default(),
            grid_volumetric: 0.07,
            calibration: TariffCalibration::Fleet,
            cost: CostModel::default(),
            sizing: SizingOptions::default(),
            de: DeConfig::default(),
            alpha: 0.95,
            mpc: MpcConfig::default(),
            forecaster: ForecasterConfig::default(),
            controllers: Controller::ALL.to_vec(),
            sizings: vec![SizingMethod::Prescient, SizingMethod::Rbc],
            levels: DEFAULT_LEVELS.to_vec(),
        }
    }
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        self.tariff.validate()?;
        if !(0.0..=self.tariff.import).contains(&self.grid_volumetric) {
            return invalid(format!(
                "grid volumetric share {} outside [0, {}]",
                self.grid_volumetric, self.tariff.import
            ));
        }
        self.cost.validate()?;
        self.mpc.validate()?;
        if !(0.0..1.0).contains(&self.alpha) {
            return invalid(format!("risk level {} outside [0, 1)", self.alpha));
        }
        if self.controllers.is_empty() || self.sizings.is_empty() {
            return invalid("select at least one controller and one sizing method");
        }
        if self.levels.iter().any(|l| !(0.0..=1.0).contains(l)) {
            return invalid("quantile levels must lie in [0, 1]");
        }
        if self.forecaster.horizon < self.mpc.horizon {
            return invalid("forecaster horizon shorter than the MPC horizon");
        }
        Ok(())
    }
}

/// Ratios of daily peaks to a reference controller's daily peaks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakRatios {
    /// One ratio per included day.
    pub ratios: Vec<f64>,
    /// Indices of the included days.
    pub days: Vec<usize>,
    /// Days dropped because the reference peak was not positive.
    pub excluded: usize,
}

/// Day-by-day `archive / reference`, skipping days whose reference peak is ≤ 0.
pub fn normalized_daily_peaks(archive: &LossArchive, reference: &LossArchive) -> Result<PeakRatios> {
    if archive.days() != reference.days() || archive.month_of_day != reference.month_of_day {
        return invalid(format!(
            "archives cover different days ({} vs {})",
            archive.days(),
            reference.days()
        ));
    }
    let mut out = PeakRatios {
        ratios: Vec::with_capacity(archive.days()),
        days: Vec::with_capacity(archive.days()),
        excluded: 0,
    };
    for (d, (&l, &r)) in archive.losses.iter().zip(&reference.losses).enumerate() {
        if r > 0.0 {
            out.ratios.push(l / r);
            out.days.push(d);
        } else {
            out.excluded += 1;
        }
    }
    Ok(out)
}

/// Nearest-rank quantiles of `values` at each level.
pub fn quantiles(values: &[f64], levels: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return invalid("no values to take quantiles of");
    }
    if let Some(l) = levels.iter().find(|l| !(0.0..=1.0).contains(*l)) {
        return invalid(format!("quantile level {l} outside [0, 1]"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(levels.iter().map(|&q| sorted[nearest_rank(q, sorted.len()) - 1]).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileRow {
    pub meter: String,
    pub values: Vec<f64>,
}

/// Per-meter quantile table of ratio distributions.
pub fn fleet_quantiles(ratios: &[(String, Vec<f64>)], levels: &[f64]) -> Result<Vec<QuantileRow>> {
    ratios
        .iter()
        .map(|(meter, r)| {
            Ok(QuantileRow {
                meter: meter.clone(),
                values: quantiles(r, levels).map_err(|e| Error::InvalidInput(format!("meter {meter}: {e}")))?,
            })
        })
        .collect()
}

/// One controller under one sizing on one meter's test split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub controller: Controller,
    pub sizing: SizingMethod,
    pub e_bat: f64,
    pub p_bat: f64,
    /// RBC parameters applied on the test split.
    pub theta: Option<RbcParams>,
    pub costs: CostBreakdown,
    pub daily_peaks: Vec<f64>,
    /// Daily peaks of the prescient MPC under the same sizing.
    pub reference_peaks: Vec<f64>,
    pub ratios: PeakRatios,
    pub lcoe_test: f64,
    pub bau_train_lcoe: f64,
    /// `lcoe_test / bau_train_lcoe`.
    pub lcoe_normalized: f64,
    /// Largest |p_b| applied, kW.
    pub max_abs_battery_power: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeterResult {
    pub meter: String,
    /// Tariff applied after calibration.
    pub tariff: TariffModel,
    pub train_days: f64,
    pub test_days: f64,
    pub bau_train_lcoe: f64,
    pub bau_test_lcoe: f64,
    pub month_of_day: Vec<usize>,
    pub sizings: Vec<SizingResult>,
    pub cells: Vec<CellResult>,
    pub forecaster: Option<Forecaster>,
    pub forecast_nmae: Option<f64>,
}

impl MeterResult {
    pub fn cell(&self, controller: Controller, sizing: SizingMethod) -> Option<&CellResult> {
        self.cells.iter().find(|c| c.controller == controller && c.sizing == sizing)
    }

    pub fn sizing(&self, method: SizingMethod) -> Option<&SizingResult> {
        self.sizings.iter().find(|s| s.method == method)
    }
}

fn run_policy(test: &PowerSeries, spec: &BatterySpec, policy: &mut dyn Policy) -> Result<(Vec<f64>, f64)> {
    let sim = simulate(test, spec, policy)?;
    let max_pb = sim.p_b.iter().fold(0.0f64, |a, p| a.max(p.abs()));
    Ok((sim.grid, max_pb))
}

/// Tariff of a study after calibration on the given training series.
pub fn calibrated_tariff(config: &StudyConfig, trains: &[PowerSeries]) -> Result<TariffModel> {
    match config.calibration {
        TariffCalibration::None => Ok(config.tariff),
        TariffCalibration::Fleet => peak_shifted_tariff_fleet(&config.tariff, config.grid_volumetric, trains),
        TariffCalibration::Meter => match trains {
            [one] => peak_shifted_tariff(&config.tariff, config.grid_volumetric, one),
            _ => invalid("per-meter calibration needs exactly one training series"),
        },
    }
}

/// Size, tune and evaluate every requested cell for one meter. Fleet
/// calibration falls back to this meter's training data alone.
pub fn evaluate_meter(train: &PowerSeries, test: &PowerSeries, config: &StudyConfig) -> Result<MeterResult> {
    config.validate()?;
    if train.meter_id() != test.meter_id() {
        return invalid("train and test splits belong to different meters");
    }
    let tariff = &calibrated_tariff(config, std::slice::from_ref(train))?;
    let cost = &config.cost;
    let bau_train = bau_lcoe(train, tariff, cost)?;
    if !(bau_train > 0.0) {
        return Err(Error::Data(format!("meter {}: BaU training LCOE is not positive", train.meter_id())));
    }
    let bau_test = bau_lcoe(test, tariff, cost)?;
    let test_cal = test.calendar();

    let needs_forecaster = config.controllers.contains(&Controller::Mpc);
    let forecaster = if needs_forecaster {
        Some(fit_forecaster(train, &config.forecaster)?)
    } else {
        None
    };
    let forecast_nmae = match &forecaster {
        Some(f) => Some(f.normalized_mae(test)?),
        None => None,
    };

    let mut sizings = Vec::new();
    let mut cells = Vec::new();
    for &method in &config.sizings {
        let sized = match method {
            SizingMethod::Prescient => size_prescient(train, tariff, cost, &config.sizing)?,
            SizingMethod::Rbc => size_rbc(train, tariff, cost, &config.sizing, &config.de)?,
        };
        let spec = sized.battery(config.sizing.eta_ch, config.sizing.eta_ds)?;
        let installed = sized.installed();

        let mut reference_policy = make_mpc(MpcSource::Prescient(test.values().to_vec()), config.mpc)?;
        let (reference_grid, _) = run_policy(test, &spec, &mut reference_policy)?;
        let reference = daily_peaks(&reference_grid, &test_cal)?;

        for &controller in &config.controllers {
            let (grid, max_pb, theta) = match controller {
                Controller::Rbc | Controller::RbcAdv => {
                    let theta = if installed {
                        let kind = if controller == Controller::Rbc {
                            TuneObjective::MeanDailyPeak
                        } else {
                            TuneObjective::Scvar { alpha: config.alpha }
                        };
                        tune_rbc(train, &spec, kind, &config.de)?.params
                    } else {
                        // Nothing to control; any parameters give the same trace.
                        sized.theta_sizing.unwrap_or(RbcParams::new(24, 0.9, 0.1)?)
                    };
                    let mut rbc = make_rbc(theta)?;
                    let (g, m) = run_policy(test, &spec, &mut rbc)?;
                    (g, m, Some(theta))
                }
                Controller::Mpc => {
                    let model = forecaster.clone().expect("forecaster fitted when MPC is requested");
                    let mut mpc = make_mpc(
                        MpcSource::Forecast {
                            model,
                            start: test.start(),
                            step_secs: test.step_secs(),
                            history: Vec::new(),
                        },
                        config.mpc,
                    )?;
                    let (g, m) = run_policy(test, &spec, &mut mpc)?;
                    (g, m, None)
                }
                Controller::MpcPrescient => {
                    let m = reference_grid
                        .iter()
                        .zip(test.values())
                        .fold(0.0f64, |a, (g, p)| a.max((g - p).abs()));
                    (reference_grid.clone(), m, None)
                }
            };
            let costs = evaluate_costs(test, &grid, sized.e_bat, sized.p_bat, tariff, cost)?;
            let archive = daily_peaks(&grid, &test_cal)?;
            let ratios = normalized_daily_peaks(&archive, &reference)?;
            cells.push(CellResult {
                controller,
                sizing: method,
                e_bat: sized.e_bat,
                p_bat: sized.p_bat,
                theta,
                lcoe_test: costs.lcoe,
                bau_train_lcoe: bau_train,
                lcoe_normalized: costs.lcoe / bau_train,
                costs,
                daily_peaks: archive.losses,
                reference_peaks: reference.losses.clone(),
                ratios,
                max_abs_battery_power: max_pb,
            });
        }
        sizings.push(sized);
    }
    Ok(MeterResult {
        meter: train.meter_id().to_string(),
        tariff: *tariff,
        train_days: train.days(),
        test_days: test.days(),
        bau_train_lcoe: bau_train,
        bau_test_lcoe: bau_test,
        month_of_day: test_cal.month_of_day.clone(),
        sizings,
        cells,
        forecaster,
        forecast_nmae,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeterFailure {
    pub meter: String,
    pub error: String,
    pub exit_code: i32,
}

/// Quantiles of normalized daily peaks for one (sizing, controller) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileTable {
    pub sizing: SizingMethod,
    pub controller: Controller,
    pub per_meter: Vec<QuantileRow>,
    /// Quantiles of all meters' days pooled together.
    pub pooled: Vec<f64>,
    pub excluded_days: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub config: StudyConfig,
    pub meters: Vec<MeterResult>,
    pub failures: Vec<MeterFailure>,
    pub quantiles: Vec<QuantileTable>,
}

/// Per meter × sizing × controller LCOE entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LcoeRow {
    pub meter: String,
    pub sizing: SizingMethod,
    pub controller: Controller,
    pub e_bat: f64,
    pub p_bat: f64,
    pub lcoe_test: f64,
    pub lcoe_sizing: f64,
    pub bau_train_lcoe: f64,
    pub lcoe_normalized: f64,
    /// `lcoe_test - lcoe_sizing`.
    pub gap: f64,
    /// Normalized LCOE above 1: the battery does not pay off ex post.
    pub not_profitable: bool,
}

/// LCOE of every cell normalized by the meter's BaU training LCOE.
pub fn lcoe_report(study: &StudyResult) -> Result<Vec<LcoeRow>> {
    let mut rows = Vec::new();
    for m in &study.meters {
        if !(m.bau_train_lcoe > 0.0) {
            return invalid(format!("meter {}: BaU training LCOE is not positive", m.meter));
        }
        for c in &m.cells {
            let sizing = m
                .sizing(c.sizing)
                .ok_or_else(|| Error::InvalidInput(format!("meter {}: missing sizing result", m.meter)))?;
            let normalized = c.lcoe_test / m.bau_train_lcoe;
            rows.push(LcoeRow {
                meter: m.meter.clone(),
                sizing: c.sizing,
                controller: c.controller,
                e_bat: c.e_bat,
                p_bat: c.p_bat,
                lcoe_test: c.lcoe_test,
                lcoe_sizing: sizing.lcoe_sizing,
                bau_train_lcoe: m.bau_train_lcoe,
                lcoe_normalized: normalized,
                gap: c.lcoe_test - sizing.lcoe_sizing,
                not_profitable: normalized > 1.0,
            });
        }
    }
    Ok(rows)
}

fn build_quantiles(meters: &[MeterResult], config: &StudyConfig) -> Result<Vec<QuantileTable>> {
    let mut tables = Vec::new();
    for &sizing in &config.sizings {
        for &controller in &config.controllers {
            let mut per: Vec<(String, Vec<f64>)> = Vec::new();
            let mut pooled = Vec::new();
            let mut excluded = 0;
            for m in meters {
                if let Some(c) = m.cell(controller, sizing) {
                    excluded += c.ratios.excluded;
                    if !c.ratios.ratios.is_empty() {
                        pooled.extend_from_slice(&c.ratios.ratios);
                        per.push((m.meter.clone(), c.ratios.ratios.clone()));
                    }
                }
            }
            if per.is_empty() {
                continue;
            }
            tables.push(QuantileTable {
                sizing,
                controller,
                per_meter: fleet_quantiles(&per, &config.levels)?,
                pooled: quantiles(&pooled, &config.levels)?,
                excluded_days: excluded,
            });
        }
    }
    Ok(tables)
}

#[derive(Serialize, Deserialize)]
struct CachedMeter {
    fingerprint: String,
    result: MeterResult,
}

/// Hash of everything a meter result depends on.
fn fingerprint(config: &StudyConfig, train: &PowerSeries, test: &PowerSeries) -> String {
    let mut h = Sha256::new();
    for part in [
        serde_json::to_vec(config),
        serde_json::to_vec(train),
        serde_json::to_vec(test),
    ] {
        h.update(part.expect("plain data serializes"));
    }
    hex::encode(h.finalize())
}

/// Evaluate a fleet of `(train, test)` pairs in parallel. With `cache_dir`,
/// finished meters are stored there and reused on the next run.
pub fn run_study(pairs: &[(PowerSeries, PowerSeries)], config: &StudyConfig, cache_dir: Option<&Path>) -> Result<StudyResult> {
    config.validate()?;
    if let Some(dir) = cache_dir {
        fs::create_dir_all(dir)?;
    }
    let mut effective = config.clone();
    if config.calibration == TariffCalibration::Fleet {
        let trains: Vec<PowerSeries> = pairs.iter().map(|(t, _)| t.clone()).collect();
        effective.tariff = calibrated_tariff(config, &trains)?;
        effective.calibration = TariffCalibration::None;
        log::info!(
            "fleet tariff: import {:.4} USD/kWh, peak {:.3} USD/kW/month",
            effective.tariff.import,
            effective.tariff.peak
        );
    }
    let config_for_meters = &effective;
    let outcomes: Vec<std::result::Result<MeterResult, MeterFailure>> = pairs
        .par_iter()
        .map(|(train, test)| {
            let id = train.meter_id().to_string();
            let cached = cache_dir.map(|d| d.join(format!("{}.json", sanitize(&id))));
            let key = fingerprint(config_for_meters, train, test);
            if let Some(path) = &cached {
                if let Ok(text) = fs::read_to_string(path) {
                    match serde_json::from_str::<CachedMeter>(&text) {
                        Ok(done) if done.fingerprint == key => {
                            log::info!("meter {id}: reusing {}", path.display());
                            return Ok(done.result);
                        }
                        _ => log::info!("meter {id}: stale result in {}, recomputing", path.display()),
                    }
                }
            }
            match evaluate_meter(train, test, config_for_meters) {
                Ok(r) => {
                    if let Some(path) = &cached {
                        let entry = CachedMeter {
                            fingerprint: key,
                            result: r.clone(),
                        };
                        let write = serde_json::to_string(&entry)
                            .map_err(Error::from)
                            .and_then(|s| fs::write(path, s).map_err(Error::from));
                        if let Err(e) = write {
                            log::warn!("meter {id}: could not store result: {e}");
                        }
                    }
                    log::info!("meter {id}: done");
                    Ok(r)
                }
                Err(e) => {
                    log::error!("meter {id}: {e}");
                    Err(MeterFailure {
                        meter: id,
                        error: e.to_string(),
                        exit_code: e.exit_code(),
                    })
                }
            }
        })
        .collect();
    let mut meters = Vec::new();
    let mut failures = Vec::new();
    for o in outcomes {
        match o {
            Ok(m) => meters.push(m),
            Err(f) => failures.push(f),
        }
    }
    meters.sort_by(|a, b| a.meter.cmp(&b.meter));
    failures.sort_by(|a, b| a.meter.cmp(&b.meter));
    let quantiles = build_quantiles(&meters, config)?;
    Ok(StudyResult {
        config: config.clone(),
        meters,
        failures,
        quantiles,
    })
}

/// File-name-safe version of a meter id.
pub fn sanitize(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Write `summary.json` and the figure tables into `dir`.
pub fn write_outputs(study: &StudyResult, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(study)?)?;

    let mut w = csv::Writer::from_path(dir.join("fig2_quantiles.csv"))?;
    w.write_record(["sizing", "controller", "aggregation", "meter", "level", "value"])?;
    for t in &study.quantiles {
        for row in &t.per_meter {
            for (l, v) in study.config.levels.iter().zip(&row.values) {
                w.write_record([
                    t.sizing.name(),
                    t.controller.name(),
                    "meter",
                    &row.meter,
                    &l.to_string(),
                    &v.to_string(),
                ])?;
            }
        }
        for (l, v) in study.config.levels.iter().zip(&t.pooled) {
            w.write_record([t.sizing.name(), t.controller.name(), "pooled", "", &l.to_string(), &v.to_string()])?;
        }
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("fig3_sizes.csv"))?;
    w.write_record(["meter", "sizing", "e_bat_kwh", "p_bat_kw", "lcoe_sizing", "bau_train_lcoe"])?;
    for m in &study.meters {
        for s in &m.sizings {
            w.write_record([
                m.meter.as_str(),
                s.method.name(),
                &s.e_bat.to_string(),
                &s.p_bat.to_string(),
                &s.lcoe_sizing.to_string(),
                &s.bau_lcoe.to_string(),
            ])?;
        }
    }
    w.flush()?;

    let rows = lcoe_report(study)?;
    let mut by_sizing: BTreeMap<SizingMethod, Vec<&LcoeRow>> = BTreeMap::new();
    for r in &rows {
        by_sizing.entry(r.sizing).or_default().push(r);
    }
    for (method, file) in [
        (SizingMethod::Prescient, "fig4_lcoe_prescient.csv"),
        (SizingMethod::Rbc, "fig5_lcoe_rbc.csv"),
    ] {
        let mut w = csv::Writer::from_path(dir.join(file))?;
        w.write_record([
            "meter",
            "controller",
            "lcoe_test",
            "lcoe_sizing",
            "bau_train_lcoe",
            "lcoe_normalized",
            "gap",
            "not_profitable",
        ])?;
        for r in by_sizing.get(&method).into_iter().flatten() {
            w.write_record([
                r.meter.as_str(),
                r.controller.name(),
                &r.lcoe_test.to_string(),
                &r.lcoe_sizing.to_string(),
                &r.bau_train_lcoe.to_string(),
                &r.lcoe_normalized.to_string(),
                &r.gap.to_string(),
                &r.not_profitable.to_string(),
            ])?;
        }
        w.flush()?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn archive(l: Vec<f64>) -> LossArchive {
        let n = l.len();
        LossArchive::new(l, vec![0; n]).unwrap()
    }

    #[test]
    fn ratios_and_exclusions() {
        let r = normalized_daily_peaks(&archive(vec![0.9, 1.8, 5.0]), &archive(vec![1.0, 2.0, 0.0])).unwrap();
        assert_eq!(r.ratios, vec![0.9, 0.9]);
        assert_eq!(r.days, vec![0, 1]);
        assert_eq!(r.excluded, 1);
        assert!(normalized_daily_peaks(&archive(vec![1.0]), &archive(vec![1.0, 2.0])).is_err());
    }

    #[test]
    fn quantile_table() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        let q = quantiles(&v, &[0.0, 0.99, 1.0]).unwrap();
        assert_eq!(q, vec![1.0, 99.0, 100.0]);
        assert!(quantiles(&[], &[0.5]).is_err());
        assert!(quantiles(&v, &[1.5]).is_err());
    }

    #[test]
    fn controller_names_round_trip() {
        for c in Controller::ALL {
            assert_eq!(c.name().parse::<Controller>().unwrap(), c);
            assert_eq!(serde_json::to_string(&c).unwrap(), format!("\"{}\"", c.name()));
        }
        assert!("lp".parse::<Controller>().is_err());
    }
}
