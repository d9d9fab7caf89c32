//! Battery state dynamics and the closed-loop simulation engine.
//!
//! Sign convention: battery power `p_b > 0` charges, so the power seen at the
//! meter is `p + p_b`. State of charge evolves as
//! `e' = e + (eta_ch * max(p_b, 0) - max(-p_b, 0) / eta_ds) * dt`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::timeseries::PowerSeries;

/// Absolute slack (kWh, kW) tolerated on bounds before an action is rejected.
pub const FEAS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatterySpec {
    /// Energy capacity, kWh.
    pub e_bat: f64,
    /// Inverter capacity, kW.
    pub p_bat: f64,
    pub eta_ch: f64,
    pub eta_ds: f64,
    pub e_min: f64,
    pub e_max: f64,
    pub p_max: f64,
    /// Initial stored energy, kWh.
    pub e0: f64,
}

impl BatterySpec {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        e_bat: f64,
        p_bat: f64,
        eta_ch: f64,
        eta_ds: f64,
        e_min: f64,
        e_max: f64,
        p_max: f64,
        e0: f64,
    ) -> Result<Self> {
        let spec = Self {
            e_bat,
            p_bat,
            eta_ch,
            eta_ds,
            e_min,
            e_max,
            p_max,
            e0,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Whole capacity usable, power limit equal to the inverter size, starting full.
    pub fn full_window(e_bat: f64, p_bat: f64, eta_ch: f64, eta_ds: f64) -> Result<Self> {
        Self::new(e_bat, p_bat, eta_ch, eta_ds, 0.0, e_bat, p_bat, e_bat)
    }

    /// A battery that can do nothing.
    pub fn empty() -> Self {
        Self {
            e_bat: 0.0,
            p_bat: 0.0,
            eta_ch: 1.0,
            eta_ds: 1.0,
            e_min: 0.0,
            e_max: 0.0,
            p_max: 0.0,
            e0: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.e_bat, self.p_bat, self.eta_ch, self.eta_ds, self.e_min, self.e_max, self.p_max, self.e0,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return invalid("battery parameters must be finite");
        }
        if !(0.0 <= self.e_min && self.e_min <= self.e0 && self.e0 <= self.e_max && self.e_max <= self.e_bat) {
            return invalid(format!(
                "need 0 <= e_min <= e0 <= e_max <= e_bat, got {} <= {} <= {} <= {}",
                self.e_min, self.e0, self.e_max, self.e_bat
            ));
        }
        if !(0.0 <= self.p_max && self.p_max <= self.p_bat) {
            return invalid(format!(
                "need 0 <= p_max <= p_bat, got p_max = {}, p_bat = {}",
                self.p_max, self.p_bat
            ));
        }
        for eta in [self.eta_ch, self.eta_ds] {
            if !(eta > 0.0 && eta <= 1.0) {
                return invalid(format!("efficiency {eta} outside (0, 1]"));
            }
        }
        Ok(())
    }

    /// Largest feasible charging power from state `e`.
    #[inline]
    pub fn max_charge(&self, e: f64, dt: f64) -> f64 {
        self.p_max.min((self.e_max - e) / (self.eta_ch * dt)).max(0.0)
    }

    /// Largest feasible discharge magnitude from state `e`.
    #[inline]
    pub fn max_discharge(&self, e: f64, dt: f64) -> f64 {
        self.p_max.min((e - self.e_min) * self.eta_ds / dt).max(0.0)
    }

    /// Project a requested battery power onto the feasible interval at `e`.
    #[inline]
    pub fn clamp_action(&self, e: f64, p_b: f64, dt: f64) -> f64 {
        p_b.clamp(-self.max_discharge(e, dt), self.max_charge(e, dt))
    }
}

/// Energy after applying `p_b` for `dt` hours. No bound checks.
#[inline]
pub fn next_energy(spec: &BatterySpec, e: f64, p_b: f64, dt: f64) -> f64 {
    e + (spec.eta_ch * p_b.max(0.0) - (-p_b).max(0.0) / spec.eta_ds) * dt
}

/// One checked state update.
pub fn step(spec: &BatterySpec, e: f64, p_b: f64, dt: f64) -> Result<f64> {
    checked_step(spec, e, p_b, dt).map_err(|message| Error::Infeasible { step: 0, message })
}

#[inline]
fn checked_step(spec: &BatterySpec, e: f64, p_b: f64, dt: f64) -> std::result::Result<f64, String> {
    if !p_b.is_finite() {
        return Err(format!("non-finite battery power {p_b}"));
    }
    if p_b.abs() > spec.p_max + FEAS_TOL {
        return Err(format!("|p_b| = {} exceeds p_max = {}", p_b.abs(), spec.p_max));
    }
    let next = next_energy(spec, e, p_b, dt);
    if next < spec.e_min - FEAS_TOL || next > spec.e_max + FEAS_TOL {
        return Err(format!(
            "energy {next} outside [{}, {}] after p_b = {p_b}",
            spec.e_min, spec.e_max
        ));
    }
    Ok(next.clamp(spec.e_min, spec.e_max))
}

/// A decision rule producing the battery power for each step.
pub trait Policy {
    /// Battery power for step `t` given the current uncontrolled power `p`
    /// and stored energy `e`. Must be feasible for `spec` at `e`.
    fn action(&mut self, t: usize, p: f64, e: f64, spec: &BatterySpec, dt: f64) -> Result<f64>;
}

/// Never touches the battery.
#[derive(Debug, Clone, Copy, Default)]
pub struct Idle;

impl Policy for Idle {
    fn action(&mut self, _: usize, _: f64, _: f64, _: &BatterySpec, _: f64) -> Result<f64> {
        Ok(0.0)
    }
}

/// Replays a fixed battery power trace, clamped to feasibility.
#[derive(Debug, Clone)]
pub struct Replay {
    pub trace: Vec<f64>,
}

impl Policy for Replay {
    fn action(&mut self, t: usize, _: f64, e: f64, spec: &BatterySpec, dt: f64) -> Result<f64> {
        let p_b = self.trace.get(t).copied().unwrap_or(0.0);
        Ok(spec.clamp_action(e, p_b, dt))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    /// Battery power, kW, positive charging.
    pub p_b: Vec<f64>,
    /// Stored energy, kWh, one more entry than steps.
    pub soc: Vec<f64>,
    /// Meter power `p + p_b`, kW.
    pub grid: Vec<f64>,
}

impl SimulationResult {
    pub fn len(&self) -> usize {
        self.p_b.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p_b.is_empty()
    }

    /// Largest per-step violation of the state update, kWh.
    pub fn energy_balance_residual(&self, spec: &BatterySpec, dt: f64) -> f64 {
        self.p_b
            .iter()
            .enumerate()
            .map(|(t, &p_b)| (self.soc[t + 1] - next_energy(spec, self.soc[t], p_b, dt)).abs())
            .fold(0.0, f64::max)
    }

    /// Largest violation of the SoC or power bounds (0 when feasible).
    pub fn bound_violation(&self, spec: &BatterySpec) -> f64 {
        let soc = self
            .soc
            .iter()
            .map(|&e| (spec.e_min - e).max(e - spec.e_max).max(0.0))
            .fold(0.0, f64::max);
        let power = self
            .p_b
            .iter()
            .map(|&p| (p.abs() - spec.p_max).max(0.0))
            .fold(0.0, f64::max);
        soc.max(power)
    }
}

/// Closed-loop simulation of `policy` on `series`.
pub fn simulate(series: &PowerSeries, spec: &BatterySpec, policy: &mut dyn Policy) -> Result<SimulationResult> {
    simulate_values(series.values(), series.dt(), spec, policy)
}

pub fn simulate_values(
    values: &[f64],
    dt: f64,
    spec: &BatterySpec,
    policy: &mut dyn Policy,
) -> Result<SimulationResult> {
    spec.validate()?;
    if !(dt > 0.0) {
        return invalid(format!("time step {dt} h must be positive"));
    }
    let n = values.len();
    let mut p_b = Vec::with_capacity(n);
    let mut soc = Vec::with_capacity(n + 1);
    let mut grid = Vec::with_capacity(n);
    let mut e = spec.e0;
    soc.push(e);
    for (t, &p) in values.iter().enumerate() {
        let a = policy.action(t, p, e, spec, dt)?;
        e = checked_step(spec, e, a, dt).map_err(|message| Error::Infeasible { step: t, message })?;
        p_b.push(a);
        soc.push(e);
        grid.push(p + a);
    }
    Ok(SimulationResult { p_b, soc, grid })
}
