//! Tariff and investment arithmetic: capital recovery factor, capex, opex,
//! levelised cost of energy and the business-as-usual baseline.
//!
//! Prices are held in USD/kWh and USD/kW/month; conversion from MWh/MW
//! happens where configuration is read.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::timeseries::PowerSeries;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TariffModel {
    /// Import price, USD/kWh.
    pub import: f64,
    /// Export remuneration, USD/kWh.
    pub export: f64,
    /// Monthly peak charge, USD/kW/month.
    pub peak: f64,
}

impl Default for TariffModel {
    fn default() -> Self {
        Self {
            import: 0.2,
            export: 0.0,
            peak: 5.75,
        }
    }
}

impl TariffModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.import.is_finite() && self.export.is_finite() && self.peak.is_finite()) {
            return invalid("tariff prices must be finite");
        }
        if self.import < 0.0 || self.peak < 0.0 {
            return invalid(format!(
                "import price {} and peak charge {} must be non-negative",
                self.import, self.peak
            ));
        }
        // Otherwise importing and exporting at once would earn money.
        if self.export > self.import {
            return invalid(format!(
                "export price {} exceeds import price {}",
                self.export, self.import
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostModel {
    /// Battery pack, USD/kWh.
    pub energy: f64,
    /// Inverter, USD/kW.
    pub power: f64,
    /// Fixed cost per installation, USD.
    pub fixed: f64,
    /// Discount rate per year.
    pub rate: f64,
    /// Investment lifetime, years.
    pub lifetime: u32,
    /// Represented days; `None` takes the day count of the evaluated series.
    #[serde(default)]
    pub days: Option<f64>,
}

impl Default for CostModel {
    fn default() -> Self {
        Self {
            energy: 120.0,
            power: 50.0,
            fixed: 1000.0,
            rate: 0.06,
            lifetime: 15,
            days: None,
        }
    }
}

impl CostModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.rate > 0.0) || self.lifetime < 1 {
            return invalid(format!(
                "need rate > 0 and lifetime >= 1, got {} and {}",
                self.rate, self.lifetime
            ));
        }
        if self.energy < 0.0 || self.power < 0.0 || self.fixed < 0.0 {
            return invalid("unit costs must be non-negative");
        }
        if let Some(d) = self.days {
            if !(d >= 1.0) {
                return invalid(format!("represented days {d} must be at least 1"));
            }
        }
        Ok(())
    }

    pub fn crf(&self) -> Result<f64> {
        crf(self.rate, self.lifetime)
    }

    /// Investment for a battery of the given size; nothing when no battery is installed.
    pub fn capex(&self, e_bat: f64, p_bat: f64) -> f64 {
        if e_bat > 0.0 || p_bat > 0.0 {
            self.energy * e_bat + self.power * p_bat + self.fixed
        } else {
            0.0
        }
    }

    /// Annualisation factor ρ = 365 / τ for `series`.
    pub fn rho(&self, series: &PowerSeries) -> f64 {
        365.0 / self.days.unwrap_or_else(|| series.days())
    }
}

/// Capital recovery factor r(1+r)^n / ((1+r)^n - 1).
pub fn crf(rate: f64, years: u32) -> Result<f64> {
    if !(rate > 0.0) {
        return invalid(format!("capital recovery factor needs rate > 0, got {rate}"));
    }
    if years == 0 {
        return invalid("capital recovery factor needs at least one year");
    }
    let g = (1.0 + rate).powi(years as i32);
    Ok(rate * g / (g - 1.0))
}

/// Operating cost of a meter power trace over the evaluated window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Opex {
    pub energy_cost: f64,
    pub peak_cost: f64,
    /// Per month `max(0, max grid)`, kW.
    pub monthly_peaks: Vec<f64>,
    pub import_kwh: f64,
    pub export_kwh: f64,
}

impl Opex {
    pub fn total(&self) -> f64 {
        self.energy_cost + self.peak_cost
    }
}

/// Energy and peak charges for a meter power trace.
///
/// `month_of_step` labels each step with a month index `0..M`; every month
/// must own at least one step.
pub fn opex(grid: &[f64], dt: f64, month_of_step: &[usize], tariff: &TariffModel) -> Result<Opex> {
    if grid.len() != month_of_step.len() {
        return invalid(format!(
            "trace has {} steps but {} month labels",
            grid.len(),
            month_of_step.len()
        ));
    }
    let n_months = month_of_step.iter().max().map_or(0, |&m| m + 1);
    let mut peaks = vec![f64::NEG_INFINITY; n_months];
    let mut import = 0.0;
    let mut export = 0.0;
    for (&g, &m) in grid.iter().zip(month_of_step) {
        import += g.max(0.0);
        export += (-g).max(0.0);
        peaks[m] = peaks[m].max(g);
    }
    if let Some(m) = peaks.iter().position(|p| *p == f64::NEG_INFINITY) {
        return Err(Error::Data(format!("month {m} has no samples")));
    }
    let monthly_peaks: Vec<f64> = peaks.into_iter().map(|p| p.max(0.0)).collect();
    let import_kwh = import * dt;
    let export_kwh = export * dt;
    Ok(Opex {
        energy_cost: tariff.import * import_kwh - tariff.export * export_kwh,
        peak_cost: tariff.peak * monthly_peaks.iter().sum::<f64>(),
        monthly_peaks,
        import_kwh,
        export_kwh,
    })
}

/// (crf·C + ρ·O) / (ρ·E).
pub fn lcoe(capex: f64, opex: f64, rho: f64, energy: f64, crf: f64) -> Result<f64> {
    if !(energy > 0.0) {
        return invalid(format!("LCOE needs positive energy, got {energy}"));
    }
    Ok((crf * capex + rho * opex) / (rho * energy))
}

/// All cost components of one evaluated operation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub capex: f64,
    pub opex: f64,
    pub energy_cost: f64,
    pub peak_cost: f64,
    pub monthly_peaks: Vec<f64>,
    pub lcoe: f64,
    /// Uncontrolled energy over the window, kWh.
    pub energy: f64,
    /// Annualised energy ρE, kWh.
    pub annual_energy: f64,
    pub rho: f64,
    pub crf: f64,
}

impl CostBreakdown {
    /// LCOE recomputed from the stored components.
    pub fn recompute_lcoe(&self) -> f64 {
        (self.crf * self.capex + self.rho * self.opex) / (self.rho * self.energy)
    }
}

/// Costs of operating a battery of size `(e_bat, p_bat)` that turns the
/// uncontrolled `series` into the meter trace `grid`.
pub fn evaluate_costs(
    series: &PowerSeries,
    grid: &[f64],
    e_bat: f64,
    p_bat: f64,
    tariff: &TariffModel,
    cost: &CostModel,
) -> Result<CostBreakdown> {
    let cal = series.calendar();
    evaluate_costs_with(series, &cal.month_of_step, grid, e_bat, p_bat, tariff, cost)
}

/// [`evaluate_costs`] with precomputed month labels.
pub(crate) fn evaluate_costs_with(
    series: &PowerSeries,
    month_of_step: &[usize],
    grid: &[f64],
    e_bat: f64,
    p_bat: f64,
    tariff: &TariffModel,
    cost: &CostModel,
) -> Result<CostBreakdown> {
    let o = opex(grid, series.dt(), month_of_step, tariff)?;
    let capex = cost.capex(e_bat, p_bat);
    let rho = cost.rho(series);
    let crf = cost.crf()?;
    let energy = series.energy();
    let total = o.total();
    Ok(CostBreakdown {
        capex,
        opex: total,
        energy_cost: o.energy_cost,
        peak_cost: o.peak_cost,
        monthly_peaks: o.monthly_peaks,
        lcoe: lcoe(capex, total, rho, energy, crf)?,
        energy,
        annual_energy: rho * energy,
        rho,
        crf,
    })
}

/// LCOE without a battery.
pub fn bau_lcoe(series: &PowerSeries, tariff: &TariffModel, cost: &CostModel) -> Result<f64> {
    Ok(evaluate_costs(series, series.values(), 0.0, 0.0, tariff, cost)?.lcoe)
}

/// Grid operator revenue on a trace: the grid share of the volumetric charge
/// plus all monthly peak charges.
pub fn grid_revenue(o: &Opex, grid_volumetric: f64, peak_price: f64) -> f64 {
    grid_volumetric * o.import_kwh + peak_price * o.monthly_peaks.iter().sum::<f64>()
}

/// Move half of the grid's volumetric charge into the monthly peak charge,
/// keeping grid revenue on the uncontrolled `train` profile unchanged.
pub fn peak_shifted_tariff(base: &TariffModel, grid_volumetric: f64, train: &PowerSeries) -> Result<TariffModel> {
    peak_shifted_tariff_fleet(base, grid_volumetric, std::slice::from_ref(train))
}

/// [`peak_shifted_tariff`] calibrated on the pooled revenue of several meters.
pub fn peak_shifted_tariff_fleet(base: &TariffModel, grid_volumetric: f64, trains: &[PowerSeries]) -> Result<TariffModel> {
    base.validate()?;
    if !(0.0..=base.import).contains(&grid_volumetric) {
        return invalid(format!(
            "grid volumetric share {grid_volumetric} outside [0, {}]",
            base.import
        ));
    }
    let mut import_kwh = 0.0;
    let mut total_peak = 0.0;
    for train in trains {
        let cal = train.calendar();
        let o = opex(train.values(), train.dt(), &cal.month_of_step, base)?;
        import_kwh += o.import_kwh;
        total_peak += o.monthly_peaks.iter().sum::<f64>();
    }
    if !(total_peak > 0.0) {
        return Err(Error::Data("training profile has no positive monthly peak".into()));
    }
    let shifted = grid_volumetric / 2.0;
    Ok(TariffModel {
        import: base.import - shifted,
        export: base.export.min(base.import - shifted),
        peak: base.peak + shifted * import_kwh / total_peak,
    })
}
