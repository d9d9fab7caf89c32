//! Microbenchmarks of the simulation hot loop and of one MPC solve.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::battery::{simulate_values, BatterySpec};
use crate::error::{invalid, Result};
use crate::mpc::mpc_step;
use crate::policies::{make_rbc, RbcParams};
use crate::timeseries::synth_fleet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub reps: usize,
    pub mean_us: f64,
    pub std_us: f64,
    pub min_us: f64,
}

impl Timing {
    fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        Self {
            reps: samples.len(),
            mean_us: mean,
            std_us: var.sqrt(),
            min_us: samples.iter().copied().fold(f64::INFINITY, f64::min),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub cpu: String,
    pub steps: usize,
    pub window: usize,
    pub rbc_simulation: Timing,
    pub mpc_horizon: usize,
    pub mpc_step: Timing,
}

/// CPU model string from `/proc/cpuinfo`, or "unknown".
pub fn cpu_model() -> String {
    std::fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|text| {
            text.lines()
                .find(|l| l.starts_with("model name") || l.starts_with("Model") || l.starts_with("cpu model"))
                .and_then(|l| l.split_once(':'))
                .map(|(_, v)| v.trim().to_string())
        })
        .unwrap_or_else(|| "unknown".to_string())
}

fn time<F: FnMut() -> Result<()>>(reps: usize, mut f: F) -> Result<Timing> {
    f()?;
    let mut samples = Vec::with_capacity(reps);
    for _ in 0..reps {
        let t0 = Instant::now();
        f()?;
        samples.push(t0.elapsed().as_secs_f64() * 1e6);
    }
    Ok(Timing::from_samples(&samples))
}

/// Time `reps` RBC simulations of `steps` hourly samples with a `window`
/// step quantile window, and `reps` MPC solves over a 24 h horizon.
pub fn run_bench(steps: usize, window: usize, reps: usize) -> Result<BenchReport> {
    if steps == 0 {
        return invalid("benchmark series must have at least one step");
    }
    if reps < 2 {
        return invalid("need at least two repetitions for a spread");
    }
    let days = steps.div_ceil(24).max(60);
    let series = synth_fleet(1, 1, days)?.remove(0);
    let values = &series.values()[..steps.min(series.len())];
    let values = if values.len() < steps {
        values.iter().copied().cycle().take(steps).collect::<Vec<_>>()
    } else {
        values.to_vec()
    };
    let peak = values.iter().copied().fold(0.0, f64::max);
    let spec = BatterySpec::full_window(2.0 * peak, 0.5 * peak, 0.95, 0.95)?;
    let params = RbcParams::new(window, 0.9, 0.1)?;

    let rbc_simulation = time(reps, || {
        let mut rbc = make_rbc(params)?;
        simulate_values(&values, 1.0, &spec, &mut rbc).map(|_| ())
    })?;
    let horizon = 24;
    let forecast = &values[..horizon.min(values.len())];
    let mpc = time(reps, || mpc_step(forecast, spec.e0, &spec, 1.0, false).map(|_| ()))?;
    Ok(BenchReport {
        cpu: cpu_model(),
        steps,
        window,
        rbc_simulation,
        mpc_horizon: forecast.len(),
        mpc_step: mpc,
    })
}
