//! Joint sizing and operation LP with perfect knowledge of the load.

use serde::{Deserialize, Serialize};

use super::{LpBuilder, LpProblem};
use crate::battery::SimulationResult;
use crate::economics::{CostModel, TariffModel};
use crate::error::{invalid, Error, Result};
use crate::timeseries::PowerSeries;

/// Battery parameters of the prescient problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrescientBattery {
    pub eta_ch: f64,
    pub eta_ds: f64,
    /// Upper bound on E_bat, kWh.
    pub e_cap: f64,
    /// Upper bound on P_bat, kW.
    pub p_cap: f64,
}

impl PrescientBattery {
    /// Caps derived from a training profile: twice the largest monthly peak
    /// held for a day, and the largest power.
    pub fn from_train(train: &PowerSeries, eta_ch: f64, eta_ds: f64) -> Self {
        let (e_cap, p_cap) = size_caps(train);
        Self {
            eta_ch,
            eta_ds,
            e_cap,
            p_cap,
        }
    }
}

/// Default box for battery sizes on `train`: `(2 * max monthly peak * 24 h, max power)`.
pub fn size_caps(train: &PowerSeries) -> (f64, f64) {
    let cal = train.calendar();
    let mut peaks = vec![0.0f64; cal.n_months()];
    for (&p, &m) in train.values().iter().zip(&cal.month_of_step) {
        peaks[m] = peaks[m].max(p);
    }
    let max_peak = peaks.iter().copied().fold(0.0, f64::max);
    (2.0 * max_peak * 24.0, train.max().max(0.0))
}

/// Where each block of variables lives in the LP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrescientLayout {
    pub n_steps: usize,
    pub n_months: usize,
    pub month_of_step: Vec<usize>,
}

impl PrescientLayout {
    pub fn ch(&self, t: usize) -> usize {
        t
    }
    pub fn ds(&self, t: usize) -> usize {
        self.n_steps + t
    }
    pub fn import(&self, t: usize) -> usize {
        2 * self.n_steps + t
    }
    pub fn export(&self, t: usize) -> usize {
        3 * self.n_steps + t
    }
    /// Stored energy before step `t`; `t` runs to `n_steps` inclusive.
    pub fn energy(&self, t: usize) -> usize {
        4 * self.n_steps + t
    }
    pub fn peak(&self, m: usize) -> usize {
        5 * self.n_steps + 1 + m
    }
    pub fn e_bat(&self) -> usize {
        5 * self.n_steps + 1 + self.n_months
    }
    pub fn p_bat(&self) -> usize {
        self.e_bat() + 1
    }
    pub fn n_vars(&self) -> usize {
        self.p_bat() + 1
    }

    /// LP point corresponding to a simulated operation on `values` with a
    /// battery of size `(e_bat, p_bat)`.
    pub fn point_from_trace(&self, values: &[f64], sim: &SimulationResult, e_bat: f64, p_bat: f64) -> Result<Vec<f64>> {
        if values.len() != self.n_steps || sim.len() != self.n_steps || sim.soc.len() != self.n_steps + 1 {
            return invalid("trace length does not match the LP");
        }
        let mut x = vec![0.0; self.n_vars()];
        for t in 0..self.n_steps {
            let pb = sim.p_b[t];
            let g = values[t] + pb;
            x[self.ch(t)] = pb.max(0.0);
            x[self.ds(t)] = (-pb).max(0.0);
            x[self.import(t)] = g.max(0.0);
            x[self.export(t)] = (-g).max(0.0);
            let m = self.month_of_step[t];
            x[self.peak(m)] = x[self.peak(m)].max(g);
        }
        for (t, &e) in sim.soc.iter().enumerate() {
            x[self.energy(t)] = e;
        }
        x[self.e_bat()] = e_bat;
        x[self.p_bat()] = p_bat;
        Ok(x)
    }

    /// Battery power `ch - ds` per step from an LP point.
    pub fn battery_power(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n_steps).map(|t| x[self.ch(t)] - x[self.ds(t)]).collect()
    }
}

/// The assembled LP and its metadata. The objective is LCOE without the
/// fixed installation cost, which is reported separately in `fixed_term`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrescientLp {
    pub problem: LpProblem,
    pub layout: PrescientLayout,
    /// LCOE contribution of the fixed cost when a battery is installed.
    pub fixed_term: f64,
}

/// Build the joint sizing LP for `series`. With `fix_size` the battery
/// dimensions are pinned and only operations are optimized.
pub fn build_prescient_lp(
    series: &PowerSeries,
    tariff: &TariffModel,
    cost: &CostModel,
    battery: &PrescientBattery,
    fix_size: Option<(f64, f64)>,
) -> Result<PrescientLp> {
    if series.is_empty() {
        return invalid("series is empty");
    }
    tariff.validate()?;
    cost.validate()?;
    for eta in [battery.eta_ch, battery.eta_ds] {
        if !(eta > 0.0 && eta <= 1.0) {
            return invalid(format!("efficiency {eta} outside (0, 1]"));
        }
    }
    let energy = series.energy();
    if !(energy > 0.0) {
        return Err(Error::Data(format!(
            "meter {} has no positive energy; LCOE is undefined",
            series.meter_id()
        )));
    }
    let (e_lo, e_hi, p_lo, p_hi) = match fix_size {
        Some((e, p)) => {
            if !(e >= 0.0 && p >= 0.0 && e.is_finite() && p.is_finite()) {
                return invalid(format!("fixed size ({e}, {p}) must be finite and non-negative"));
            }
            (e, e, p, p)
        }
        None => {
            if !(battery.e_cap >= 0.0 && battery.p_cap >= 0.0) {
                return invalid("size caps must be non-negative");
            }
            (0.0, battery.e_cap, 0.0, battery.p_cap)
        }
    };

    let cal = series.calendar();
    let n = series.len();
    let dt = series.dt();
    let rho = cost.rho(series);
    let crf = cost.crf()?;
    let denom = rho * energy;
    let layout = PrescientLayout {
        n_steps: n,
        n_months: cal.n_months(),
        month_of_step: cal.month_of_step.clone(),
    };

    let inf = f64::INFINITY;
    let mut b = LpBuilder::new();
    for _ in 0..2 * n {
        b.add_var(0.0, inf, 0.0);
    }
    for _ in 0..n {
        b.add_var(0.0, inf, dt * tariff.import / energy);
    }
    for _ in 0..n {
        b.add_var(0.0, inf, -dt * tariff.export / energy);
    }
    for _ in 0..=n {
        b.add_var(0.0, inf, 0.0);
    }
    for _ in 0..layout.n_months {
        b.add_var(0.0, inf, tariff.peak / energy);
    }
    let ev = b.add_var(e_lo, e_hi, crf * cost.energy / denom);
    let pv = b.add_var(p_lo, p_hi, crf * cost.power / denom);
    debug_assert_eq!(ev, layout.e_bat());
    debug_assert_eq!(pv, layout.p_bat());

    b.add_eq(&[(layout.energy(0), 1.0), (ev, -1.0)], 0.0);
    for (t, &p) in series.values().iter().enumerate() {
        b.add_eq(
            &[
                (layout.energy(t + 1), 1.0),
                (layout.energy(t), -1.0),
                (layout.ch(t), -dt * battery.eta_ch),
                (layout.ds(t), dt / battery.eta_ds),
            ],
            0.0,
        );
        b.add_eq(
            &[
                (layout.import(t), 1.0),
                (layout.export(t), -1.0),
                (layout.ch(t), -1.0),
                (layout.ds(t), 1.0),
            ],
            p,
        );
    }
    for t in 0..n {
        b.add_le(&[(layout.ch(t), 1.0), (pv, -1.0)], 0.0);
        b.add_le(&[(layout.ds(t), 1.0), (pv, -1.0)], 0.0);
        b.add_le(&[(layout.energy(t + 1), 1.0), (ev, -1.0)], 0.0);
        b.add_le(&[(layout.import(t), 1.0), (layout.peak(layout.month_of_step[t]), -1.0)], 0.0);
    }
    Ok(PrescientLp {
        problem: b.build()?,
        layout,
        fixed_term: crf * cost.fixed / denom,
    })
}
