//! Three-parameter rule-based peak-shaving controller.
//!
//! Thresholds are sliding-window quantiles of the uncontrolled power: the
//! battery discharges when the current power exceeds the upper quantile,
//! charges when it falls below the lower quantile, and idles otherwise.
//! The window holds strictly past powers; the current power is pushed after
//! the decision.

use serde::{Deserialize, Serialize};

use crate::battery::{BatterySpec, Policy};
use crate::error::{invalid, Result};
use crate::quantile::{nearest_rank, SlidingQuantile};

/// Smallest and largest window length in steps.
pub const WINDOW_RANGE: (usize, usize) = (1, 336);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RbcParams {
    /// Number of trailing powers feeding the quantiles.
    pub window: usize,
    /// Quantile level of the discharge threshold.
    pub upper: f64,
    /// Quantile level of the charge threshold.
    pub lower: f64,
}

impl RbcParams {
    pub fn new(window: usize, upper: f64, lower: f64) -> Result<Self> {
        let p = Self { window, upper, lower };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return invalid("RBC window must be at least one step");
        }
        if !(0.0..=1.0).contains(&self.upper) || !(0.0..=1.0).contains(&self.lower) {
            return invalid(format!(
                "quantile levels must lie in [0, 1], got upper {} lower {}",
                self.upper, self.lower
            ));
        }
        if self.lower > self.upper {
            return invalid(format!(
                "lower level {} exceeds upper level {}",
                self.lower, self.upper
            ));
        }
        Ok(())
    }

    /// Decode a continuous search vector `[window, upper, lower]`; the window is
    /// rounded to the nearest step and clamped to [`WINDOW_RANGE`].
    pub fn from_search(x: &[f64]) -> Result<Self> {
        if x.len() != 3 {
            return invalid(format!("RBC search vector needs 3 entries, got {}", x.len()));
        }
        let window = x[0].round().clamp(WINDOW_RANGE.0 as f64, WINDOW_RANGE.1 as f64) as usize;
        Self::new(window, x[1], x[2])
    }

    pub fn to_search(&self) -> [f64; 3] {
        [self.window as f64, self.upper, self.lower]
    }
}

/// One controller decision followed by the window update.
///
/// Returns the battery power (negative when discharging). With an empty
/// window the controller idles.
#[inline]
pub fn rbc_step(
    params: &RbcParams,
    window: &mut SlidingQuantile,
    p: f64,
    e: f64,
    spec: &BatterySpec,
    dt: f64,
) -> Result<f64> {
    let p_b = match (
        window.quantile_unchecked(params.upper),
        window.quantile_unchecked(params.lower),
    ) {
        (Some(q_up), Some(q_lo)) => decide(p, q_up, q_lo, e, spec, dt),
        _ => 0.0,
    };
    window.push(p)?;
    Ok(p_b)
}

#[inline]
fn decide(p: f64, q_up: f64, q_lo: f64, e: f64, spec: &BatterySpec, dt: f64) -> f64 {
    if p > q_up {
        -(p - q_up).min(spec.max_discharge(e, dt))
    } else if p < q_lo {
        (q_lo - p).min(spec.max_charge(e, dt))
    } else {
        0.0
    }
}

/// The rule-based controller as a [`Policy`].
#[derive(Debug, Clone)]
pub struct Rbc {
    params: RbcParams,
    window: SlidingQuantile,
    /// Zero-based ranks of both thresholds in a full window.
    full_ranks: (usize, usize),
}

impl Rbc {
    pub fn new(params: RbcParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            params,
            window: SlidingQuantile::new(params.window)?,
            full_ranks: (
                nearest_rank(params.upper, params.window) - 1,
                nearest_rank(params.lower, params.window) - 1,
            ),
        })
    }

    pub fn params(&self) -> &RbcParams {
        &self.params
    }
}

impl Policy for Rbc {
    #[inline]
    fn action(&mut self, _: usize, p: f64, e: f64, spec: &BatterySpec, dt: f64) -> Result<f64> {
        if self.window.len() < self.params.window {
            return rbc_step(&self.params, &mut self.window, p, e, spec, dt);
        }
        let sorted = self.window.ordered();
        let p_b = decide(p, sorted[self.full_ranks.0], sorted[self.full_ranks.1], e, spec, dt);
        self.window.push(p)?;
        Ok(p_b)
    }
}

/// Fresh controller state for `params`.
pub fn make_rbc(params: RbcParams) -> Result<Rbc> {
    Rbc::new(params)
}
