//! Battery sizing on a training series: the prescient LP and a direct search
//! over size and RBC parameters.

use serde::{Deserialize, Serialize};

use crate::battery::{simulate_values, BatterySpec};
use crate::economics::{bau_lcoe, evaluate_costs_with, CostModel, TariffModel};
use crate::error::{invalid, Error, Result};
use crate::lp::{
    build_prescient_lp, size_caps, solve_dense, solve_first_order, LpStatus, PdhgOptions, PrescientBattery, DENSE_LIMIT,
};
use crate::optimize::{minimize, rbc_search_space, tune_rbc, DeConfig, SearchSpace, TuneObjective};
use crate::policies::{make_rbc, RbcParams};
use crate::timeseries::{Calendar, PowerSeries};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SizingMethod {
    Prescient,
    Rbc,
}

impl SizingMethod {
    pub fn name(self) -> &'static str {
        match self {
            Self::Prescient => "prescient",
            Self::Rbc => "rbc",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LpBackend {
    /// Dense simplex when small enough, first-order otherwise.
    Auto,
    Dense,
    FirstOrder,
}

/// Settings shared by both sizing methods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SizingOptions {
    pub eta_ch: f64,
    pub eta_ds: f64,
    /// Upper bound on E_bat; `None` derives it from the training data.
    pub e_cap: Option<f64>,
    /// Upper bound on P_bat; `None` derives it from the training data.
    pub p_cap: Option<f64>,
    pub backend: LpBackend,
    /// Relative tolerance of the first-order LP backend.
    pub lp_tol: f64,
    pub lp_max_iters: usize,
    /// What the RBC search minimises.
    pub rbc_objective: RbcSizingObjective,
}

impl Default for SizingOptions {
    fn default() -> Self {
        Self {
            eta_ch: 0.95,
            eta_ds: 0.95,
            e_cap: None,
            p_cap: None,
            backend: LpBackend::Auto,
            lp_tol: 1e-6,
            lp_max_iters: 500_000,
            rbc_objective: RbcSizingObjective::Lcoe,
        }
    }
}

impl SizingOptions {
    /// Size caps for `train`.
    pub fn caps(&self, train: &PowerSeries) -> (f64, f64) {
        let (e, p) = size_caps(train);
        (self.e_cap.unwrap_or(e), self.p_cap.unwrap_or(p))
    }

    fn validate(&self) -> Result<()> {
        for eta in [self.eta_ch, self.eta_ds] {
            if !(eta > 0.0 && eta <= 1.0) {
                return invalid(format!("efficiency {eta} outside (0, 1]"));
            }
        }
        for cap in [self.e_cap, self.p_cap].into_iter().flatten() {
            if !(cap >= 0.0 && cap.is_finite()) {
                return invalid(format!("size cap {cap} must be finite and non-negative"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum RbcSizingObjective {
    /// Joint search over sizes and RBC parameters minimising training LCOE.
    Lcoe,
    /// Tune the RBC on a daily-peak objective at the size caps, then search
    /// sizes for that controller by LCOE.
    Surrogate { objective: TuneObjective },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SizingDiagnostics {
    Lp {
        status: LpStatus,
        backend: LpBackend,
        iterations: usize,
        /// LP optimum before the fixed installation cost.
        objective: f64,
        primal_residual: f64,
        gap: f64,
        /// LP sizes before the install decision.
        lp_e_bat: f64,
        lp_p_bat: f64,
    },
    De {
        history: Vec<f64>,
        evaluations: usize,
        generations: usize,
        converged: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizingResult {
    pub method: SizingMethod,
    pub e_bat: f64,
    pub p_bat: f64,
    pub theta_sizing: Option<RbcParams>,
    /// Training LCOE promised at sizing time, USD/kWh.
    pub lcoe_sizing: f64,
    pub bau_lcoe: f64,
    pub e_cap: f64,
    pub p_cap: f64,
    pub diagnostics: SizingDiagnostics,
}

impl SizingResult {
    pub fn installed(&self) -> bool {
        self.e_bat > 0.0 || self.p_bat > 0.0
    }

    /// Battery with the full usable window used inside sizing.
    pub fn battery(&self, eta_ch: f64, eta_ds: f64) -> Result<BatterySpec> {
        BatterySpec::full_window(self.e_bat, self.p_bat, eta_ch, eta_ds)
    }
}

fn check_energy(train: &PowerSeries) -> Result<()> {
    if train.is_empty() {
        return invalid("training series is empty");
    }
    if !(train.energy() > 0.0) {
        return Err(Error::Data(format!(
            "meter {} has no positive energy; LCOE is undefined",
            train.meter_id()
        )));
    }
    Ok(())
}

/// Joint sizing and operation with perfect foresight. The fixed cost makes
/// installation a yes/no decision, taken by comparing against no battery.
pub fn size_prescient(
    train: &PowerSeries,
    tariff: &TariffModel,
    cost: &CostModel,
    options: &SizingOptions,
) -> Result<SizingResult> {
    options.validate()?;
    check_energy(train)?;
    let (e_cap, p_cap) = options.caps(train);
    let battery = PrescientBattery {
        eta_ch: options.eta_ch,
        eta_ds: options.eta_ds,
        e_cap,
        p_cap,
    };
    let lp = build_prescient_lp(train, tariff, cost, &battery, None)?;
    let backend = match options.backend {
        LpBackend::Auto if lp.problem.n_vars() <= DENSE_LIMIT => LpBackend::Dense,
        LpBackend::Auto => LpBackend::FirstOrder,
        b => b,
    };
    let sol = match backend {
        LpBackend::Dense => solve_dense(&lp.problem, 1e-9)?,
        _ => solve_first_order(
            &lp.problem,
            &PdhgOptions {
                tol: options.lp_tol,
                max_iters: options.lp_max_iters,
                ..PdhgOptions::default()
            },
        )?,
    };
    if sol.status != LpStatus::Optimal {
        return Err(Error::Numerical(format!(
            "prescient LP for meter {} ended with status {:?} after {} iterations",
            train.meter_id(),
            sol.status,
            sol.iterations
        )));
    }
    let bau = bau_lcoe(train, tariff, cost)?;
    let (lp_e, lp_p) = (sol.x[lp.layout.e_bat()], sol.x[lp.layout.p_bat()]);
    let with_battery = sol.objective + lp.fixed_term;
    let (e_bat, p_bat, lcoe) = if with_battery < bau && (lp_e > 0.0 || lp_p > 0.0) {
        (lp_e, lp_p, with_battery)
    } else {
        (0.0, 0.0, bau)
    };
    log::debug!(
        "prescient sizing {}: caps ({e_cap:.1} kWh, {p_cap:.1} kW), LP ({lp_e:.3}, {lp_p:.3}), LCOE {lcoe:.6}",
        train.meter_id()
    );
    Ok(SizingResult {
        method: SizingMethod::Prescient,
        e_bat,
        p_bat,
        theta_sizing: None,
        lcoe_sizing: lcoe,
        bau_lcoe: bau,
        e_cap,
        p_cap,
        diagnostics: SizingDiagnostics::Lp {
            status: sol.status,
            backend,
            iterations: sol.iterations,
            objective: sol.objective,
            primal_residual: sol.primal_residual,
            gap: sol.gap,
            lp_e_bat: lp_e,
            lp_p_bat: lp_p,
        },
    })
}

/// Training LCOE of an RBC with parameters `theta` on a battery of the given size.
#[allow(clippy::too_many_arguments)]
pub fn rbc_sizing_lcoe(
    train: &PowerSeries,
    calendar: &Calendar,
    tariff: &TariffModel,
    cost: &CostModel,
    e_bat: f64,
    p_bat: f64,
    theta: RbcParams,
    eta: (f64, f64),
) -> Result<f64> {
    let spec = BatterySpec::full_window(e_bat, p_bat, eta.0, eta.1)?;
    let mut rbc = make_rbc(theta)?;
    let sim = simulate_values(train.values(), train.dt(), &spec, &mut rbc)?;
    Ok(evaluate_costs_with(train, &calendar.month_of_step, &sim.grid, e_bat, p_bat, tariff, cost)?.lcoe)
}

/// Size the battery for the rule-based controller by direct search.
pub fn size_rbc(
    train: &PowerSeries,
    tariff: &TariffModel,
    cost: &CostModel,
    options: &SizingOptions,
    de: &DeConfig,
) -> Result<SizingResult> {
    options.validate()?;
    check_energy(train)?;
    let calendar = train.calendar();
    if calendar.n_months() < 2 {
        return invalid(format!(
            "RBC sizing needs at least two months of training data, got {}",
            calendar.n_months()
        ));
    }
    tariff.validate()?;
    cost.validate()?;
    let (e_cap, p_cap) = options.caps(train);
    let eta = (options.eta_ch, options.eta_ds);
    let bau = bau_lcoe(train, tariff, cost)?;
    let eval = |e: f64, p: f64, theta: RbcParams| -> f64 {
        rbc_sizing_lcoe(train, &calendar, tariff, cost, e, p, theta, eta).unwrap_or(f64::INFINITY)
    };

    let (e_bat, p_bat, theta, best, res) = match options.rbc_objective {
        RbcSizingObjective::Lcoe => {
            let rbc_box = rbc_search_space();
            let mut bounds = vec![(0.0, e_cap), (0.0, p_cap)];
            bounds.extend(rbc_box.bounds.iter().copied());
            let space = SearchSpace::new(bounds).with_integer(2);
            let res = minimize(
                |x| match RbcParams::from_search(&x[2..]) {
                    Ok(theta) => eval(x[0], x[1], theta),
                    Err(_) => f64::INFINITY,
                },
                &space,
                de,
            )?;
            let theta = RbcParams::from_search(&res.x[2..])?;
            (res.x[0], res.x[1], theta, res.f, res)
        }
        RbcSizingObjective::Surrogate { objective } => {
            let big = BatterySpec::full_window(e_cap, p_cap, eta.0, eta.1)?;
            let tuned = tune_rbc(train, &big, objective, de)?;
            let theta = tuned.params;
            let space = SearchSpace::new(vec![(0.0, e_cap), (0.0, p_cap)]);
            let res = minimize(|x| eval(x[0], x[1], theta), &space, de)?;
            (res.x[0], res.x[1], theta, res.f, res)
        }
    };
    let (e_bat, p_bat, lcoe) = if best < bau { (e_bat, p_bat, best) } else { (0.0, 0.0, bau) };
    log::debug!(
        "RBC sizing {}: caps ({e_cap:.1} kWh, {p_cap:.1} kW), size ({e_bat:.3}, {p_bat:.3}), LCOE {lcoe:.6}",
        train.meter_id()
    );
    Ok(SizingResult {
        method: SizingMethod::Rbc,
        e_bat,
        p_bat,
        theta_sizing: Some(theta),
        lcoe_sizing: lcoe,
        bau_lcoe: bau,
        e_cap,
        p_cap,
        diagnostics: SizingDiagnostics::De {
            history: res.history,
            evaluations: res.evaluations,
            generations: res.generations,
            converged: res.converged,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use chrono::{TimeZone, Utc};

    fn two_months(values: impl Fn(usize) -> f64) -> PowerSeries {
        let v: Vec<f64> = (0..24 * 59).map(values).collect();
        PowerSeries::hourly("m", Utc.with_ymd_and_hms(2023, 1, 1, 0, 0, 0).unwrap(), v).unwrap()
    }

    fn quick_de() -> DeConfig {
        DeConfig {
            max_generations: 30,
            seed: 3,
            ..DeConfig::default()
        }
    }

    #[test]
    fn flat_profile_without_peak_price_skips_battery() {
        let s = two_months(|_| 5.0);
        let tariff = TariffModel {
            import: 0.2,
            export: 0.0,
            peak: 0.0,
        };
        let r = size_prescient(&s, &tariff, &CostModel::default(), &SizingOptions::default()).unwrap();
        assert_eq!((r.e_bat, r.p_bat), (0.0, 0.0));
        assert_relative_eq!(r.lcoe_sizing, r.bau_lcoe, epsilon = 1e-12);
    }

    #[test]
    fn prohibitive_cost_keeps_bau() {
        let s = two_months(|t| if t % 24 == 18 { 30.0 } else { 5.0 });
        let cost = CostModel {
            energy: 1e7,
            power: 1e7,
            ..CostModel::default()
        };
        let r = size_rbc(&s, &TariffModel::default(), &cost, &SizingOptions::default(), &quick_de()).unwrap();
        assert_eq!((r.e_bat, r.p_bat), (0.0, 0.0));
        assert_eq!(r.lcoe_sizing, r.bau_lcoe);
    }

    #[test]
    fn free_battery_is_used() {
        let s = two_months(|t| if t % 24 == 18 { 30.0 } else { 5.0 });
        let cost = CostModel {
            energy: 0.0,
            power: 0.0,
            fixed: 0.0,
            ..CostModel::default()
        };
        let tariff = TariffModel {
            peak: 20.0,
            ..TariffModel::default()
        };
        let r = size_rbc(&s, &tariff, &cost, &SizingOptions::default(), &quick_de()).unwrap();
        assert!(r.e_bat > 0.0 && r.p_bat > 0.0);
        assert!(r.lcoe_sizing < r.bau_lcoe);
        let cal = s.calendar();
        let again = rbc_sizing_lcoe(
            &s,
            &cal,
            &tariff,
            &cost,
            r.e_bat,
            r.p_bat,
            r.theta_sizing.unwrap(),
            (0.95, 0.95),
        )
        .unwrap();
        assert_eq!(again, r.lcoe_sizing);
    }

    #[test]
    fn one_month_rejected_for_rbc() {
        let v = vec![1.0; 24 * 20];
        let s = PowerSeries::hourly("m", Utc.with_ymd_and_hms(2023, 1, 1, 0, 0, 0).unwrap(), v).unwrap();
        assert!(size_rbc(&s, &TariffModel::default(), &CostModel::default(), &SizingOptions::default(), &quick_de()).is_err());
    }
}
