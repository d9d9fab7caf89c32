//! Receding-horizon MPC with a quadratic peak-shaving objective, and the
//! per-lead-time ridge forecaster that feeds it.
//!
//! At step `t` the controller forecasts `p_t .. p_{t+H-1}` from loads up to
//! `t - 1`, solves
//!
//! ```text
//! min Σ_h (p̂_h + ch_h - ds_h)²   s.t.   0 <= ch, ds <= P_max,
//!                                       E_min <= e_h <= E_max
//! ```
//!
//! and applies the first action. The prescient variant uses the true loads.

use std::collections::VecDeque;

use chrono::{DateTime, Duration, Utc};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::battery::{BatterySpec, Policy};
use crate::error::{invalid, Error, Result};
use crate::lp::qp::{QpSettings, QpSolver};
use crate::timeseries::{calendar_of, PowerSeries, N_LAGS};

/// Lags, hour-of-day and day-of-week indicators.
pub const N_FEATURES: usize = N_LAGS + 24 + 7;

fn feature_name(k: usize) -> String {
    if k < N_LAGS {
        format!("lag_{}", k + 1)
    } else if k < N_LAGS + 24 {
        format!("hour_{}", k - N_LAGS)
    } else {
        format!("weekday_{}", k - N_LAGS - 24)
    }
}

/// `lags[0]` is the most recent load.
fn features(lags: impl Iterator<Item = f64>, ts: DateTime<Utc>) -> [f64; N_FEATURES] {
    let mut f = [0.0; N_FEATURES];
    for (slot, v) in f.iter_mut().zip(lags.take(N_LAGS)) {
        *slot = v;
    }
    let (hour, weekday) = calendar_of(ts);
    f[N_LAGS + hour as usize] = 1.0;
    f[N_LAGS + 24 + weekday as usize] = 1.0;
    f
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForecasterConfig {
    pub horizon: usize,
    /// Ridge penalty on standardized features.
    pub ridge: f64,
}

impl Default for ForecasterConfig {
    fn default() -> Self {
        Self {
            horizon: 24,
            ridge: 1.0,
        }
    }
}

/// One linear model per lead time over standardized features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forecaster {
    pub horizon: usize,
    pub ridge: f64,
    pub step_secs: i64,
    /// Indices of the features with non-zero training variance.
    pub kept: Vec<usize>,
    pub feature_mean: Vec<f64>,
    pub feature_scale: Vec<f64>,
    /// Per lead time.
    pub intercept: Vec<f64>,
    /// Per lead time, per kept feature.
    pub coef: Vec<Vec<f64>>,
    /// Mean training load, the basis of the normalized MAE.
    pub train_mean: f64,
}

/// Fit the forecaster on `train`. Lead `h` predicts the load `h` steps after
/// the forecast origin.
pub fn fit_forecaster(train: &PowerSeries, config: &ForecasterConfig) -> Result<Forecaster> {
    let h_max = config.horizon;
    if h_max == 0 {
        return invalid("forecast horizon must be at least 1");
    }
    if !(config.ridge >= 0.0) {
        return invalid(format!("ridge penalty {} must be non-negative", config.ridge));
    }
    let n = train.len();
    if n <= 2 * N_LAGS || n < N_LAGS + h_max + 1 {
        return invalid(format!(
            "need more than {} samples to fit the forecaster, got {n}",
            (2 * N_LAGS).max(N_LAGS + h_max)
        ));
    }
    let v = train.values();
    let origins: Vec<usize> = (N_LAGS..=n - h_max).collect();
    let rows: Vec<[f64; N_FEATURES]> = origins
        .iter()
        .map(|&t| features((1..=N_LAGS).map(|k| v[t - k]), train.timestamp(t)))
        .collect();
    let n_rows = rows.len() as f64;

    let mut mean = [0.0; N_FEATURES];
    for r in &rows {
        for (m, x) in mean.iter_mut().zip(r) {
            *m += x / n_rows;
        }
    }
    let mut var = [0.0; N_FEATURES];
    for r in &rows {
        for k in 0..N_FEATURES {
            var[k] += (r[k] - mean[k]).powi(2) / n_rows;
        }
    }
    let kept: Vec<usize> = (0..N_FEATURES).filter(|&k| var[k] > 1e-12 * (1.0 + mean[k].abs())).collect();
    let scale: Vec<f64> = kept.iter().map(|&k| var[k].sqrt()).collect();
    let kept_mean: Vec<f64> = kept.iter().map(|&k| mean[k]).collect();
    let p = kept.len();

    let x = DMatrix::from_fn(rows.len(), p, |i, j| (rows[i][kept[j]] - kept_mean[j]) / scale[j]);
    let mut gram = x.transpose() * &x;
    for j in 0..p {
        gram[(j, j)] += config.ridge;
    }
    let chol = match gram.clone().cholesky() {
        Some(c) => c,
        None => {
            let culprit = (1..=p)
                .find(|&k| gram.view((0, 0), (k, k)).into_owned().cholesky().is_none())
                .map_or(0, |k| k - 1);
            return Err(Error::Numerical(format!(
                "degenerate design matrix: feature {} is collinear with earlier ones",
                feature_name(kept[culprit])
            )));
        }
    };

    let mut intercept = Vec::with_capacity(h_max);
    let mut coef = Vec::with_capacity(h_max);
    for h in 0..h_max {
        let y: Vec<f64> = origins.iter().map(|&t| v[t + h]).collect();
        let y_mean = y.iter().sum::<f64>() / n_rows;
        let yc = DVector::from_iterator(y.len(), y.iter().map(|v| v - y_mean));
        let beta = chol.solve(&(x.transpose() * yc));
        intercept.push(y_mean);
        coef.push(beta.as_slice().to_vec());
    }
    Ok(Forecaster {
        horizon: h_max,
        ridge: config.ridge,
        step_secs: train.step_secs(),
        kept,
        feature_mean: kept_mean,
        feature_scale: scale,
        intercept,
        coef,
        train_mean: train.energy() / (train.len() as f64 * train.dt()),
    })
}

impl Forecaster {
    /// Forecast the `horizon` loads starting at `origin`. `recent` holds at
    /// least the last 24 loads before `origin`, oldest first.
    pub fn predict(&self, recent: &[f64], origin: DateTime<Utc>) -> Result<Vec<f64>> {
        if recent.len() < N_LAGS {
            return invalid(format!("need {N_LAGS} past loads, got {}", recent.len()));
        }
        let f = features(recent.iter().rev().copied(), origin);
        let z: Vec<f64> = self
            .kept
            .iter()
            .enumerate()
            .map(|(j, &k)| (f[k] - self.feature_mean[j]) / self.feature_scale[j])
            .collect();
        Ok(self
            .intercept
            .iter()
            .zip(&self.coef)
            .map(|(b0, b)| b0 + b.iter().zip(&z).map(|(a, x)| a * x).sum::<f64>())
            .collect())
    }

    /// Mean absolute error over every origin and lead of `series`, divided by
    /// the mean training load.
    pub fn normalized_mae(&self, series: &PowerSeries) -> Result<f64> {
        if !(self.train_mean > 0.0) {
            return Err(Error::Data("mean training load is not positive".into()));
        }
        let v = series.values();
        if v.len() < N_LAGS + self.horizon {
            return invalid("series too short to score the forecaster");
        }
        let mut total = 0.0;
        let mut count = 0usize;
        for t in N_LAGS..=v.len() - self.horizon {
            let pred = self.predict(&v[t - N_LAGS..t], series.timestamp(t))?;
            for (h, p) in pred.iter().enumerate() {
                total += (p - v[t + h]).abs();
                count += 1;
            }
        }
        Ok(total / count as f64 / self.train_mean)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MpcConfig {
    /// Planning horizon in steps.
    pub horizon: usize,
    /// Re-plan every this many steps, applying the stored plan in between.
    pub resolve_every: usize,
    /// Require the plan to end at the starting energy.
    pub terminal_soc: bool,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self {
            horizon: 24,
            resolve_every: 1,
            terminal_soc: false,
        }
    }
}

impl MpcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 || self.resolve_every == 0 {
            return invalid("MPC horizon and re-plan interval must be at least 1");
        }
        if self.resolve_every > self.horizon {
            return invalid("MPC re-plan interval exceeds the horizon");
        }
        Ok(())
    }
}

/// Battery power plan over a horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct MpcPlan {
    /// Net battery power per step, positive charging.
    pub p_b: Vec<f64>,
    /// Planned `Σ (p̂ + p_b)²`.
    pub objective: f64,
    pub iterations: usize,
}

/// Horizon QP with a cached factorization. Variables are `[ch; ds]`.
struct HorizonQp {
    h: usize,
    terminal: bool,
    dt: f64,
    spec: BatterySpec,
    solver: QpSolver,
    warm: Option<(Vec<f64>, Vec<f64>)>,
}

impl HorizonQp {
    fn new(h: usize, spec: &BatterySpec, dt: f64, terminal: bool) -> Result<Self> {
        let n = 2 * h;
        let m = 2 * h + h;
        let mut p = DMatrix::zeros(n, n);
        for i in 0..h {
            p[(i, i)] = 2.0;
            p[(h + i, h + i)] = 2.0;
            p[(i, h + i)] = -2.0;
            p[(h + i, i)] = -2.0;
        }
        let mut a = DMatrix::zeros(m, n);
        for i in 0..n {
            a[(i, i)] = 1.0;
        }
        for r in 0..h {
            for k in 0..=r {
                a[(2 * h + r, k)] = dt * spec.eta_ch;
                a[(2 * h + r, h + k)] = -dt / spec.eta_ds;
            }
        }
        let (l, u) = Self::bounds(h, spec, spec.e0, terminal);
        let solver = QpSolver::new(p, vec![0.0; n], a, l, u, QpSettings::default())?;
        Ok(Self {
            h,
            terminal,
            dt,
            spec: *spec,
            solver,
            warm: None,
        })
    }

    fn bounds(h: usize, spec: &BatterySpec, e: f64, terminal: bool) -> (Vec<f64>, Vec<f64>) {
        let mut l = vec![0.0; 3 * h];
        let mut u = vec![spec.p_max; 3 * h];
        for r in 0..h {
            l[2 * h + r] = spec.e_min - e;
            u[2 * h + r] = spec.e_max - e;
        }
        if terminal {
            l[3 * h - 1] = 0.0;
            u[3 * h - 1] = 0.0;
        }
        // Rounding can leave e a hair outside its window.
        for r in 2 * h..3 * h {
            if l[r] > u[r] {
                let mid = 0.5 * (l[r] + u[r]);
                l[r] = mid;
                u[r] = mid;
            }
        }
        (l, u)
    }

    fn matches(&self, h: usize, spec: &BatterySpec, dt: f64, terminal: bool) -> bool {
        self.h == h && self.dt == dt && self.terminal == terminal && same_limits(&self.spec, spec)
    }

    fn solve(&mut self, forecast: &[f64], e: f64, shift: usize) -> Result<MpcPlan> {
        let h = self.h;
        let mut q = vec![0.0; 2 * h];
        for (i, &f) in forecast.iter().enumerate() {
            q[i] = 2.0 * f;
            q[h + i] = -2.0 * f;
        }
        self.solver.set_q(&q)?;
        let (l, mut u) = Self::bounds(h, &self.spec, e, self.terminal);
        self.solver.set_bounds(l.clone(), u.clone())?;
        let warm = self.warm.as_ref().map(|(x, y)| shift_warm(x, y, h, shift));
        let mut sol = self
            .solver
            .solve(warm.as_ref().map(|(x, y)| (x.as_slice(), y.as_slice())))?;
        let mut iterations = sol.iterations;
        // The relaxation may charge and discharge at once to burn energy when
        // the forecast exports. Fix each such step to its net direction.
        let tol = 1e-7 * (1.0 + self.spec.p_max);
        let overlap: Vec<usize> = (0..h).filter(|&i| sol.x[i].min(sol.x[h + i]) > tol).collect();
        if !overlap.is_empty() {
            for &i in &overlap {
                let minor = if sol.x[i] >= sol.x[h + i] { h + i } else { i };
                u[minor] = 0.0;
            }
            self.solver.set_bounds(l, u)?;
            let x0 = sol.x.clone();
            let y0 = sol.y.clone();
            sol = self.solver.solve(Some((&x0, &y0)))?;
            iterations += sol.iterations;
        }
        let p_b: Vec<f64> = (0..h).map(|i| sol.x[i] - sol.x[h + i]).collect();
        let objective = forecast.iter().zip(&p_b).map(|(f, b)| (f + b).powi(2)).sum();
        self.warm = Some((sol.x, sol.y));
        Ok(MpcPlan {
            p_b,
            objective,
            iterations,
        })
    }
}

fn same_limits(a: &BatterySpec, b: &BatterySpec) -> bool {
    a.p_max == b.p_max && a.e_min == b.e_min && a.e_max == b.e_max && a.eta_ch == b.eta_ch && a.eta_ds == b.eta_ds
}

/// Drop the first `shift` steps of every block and pad with zeros.
fn shift_warm(x: &[f64], y: &[f64], h: usize, shift: usize) -> (Vec<f64>, Vec<f64>) {
    let shift_block = |v: &[f64]| -> Vec<f64> {
        let mut out: Vec<f64> = v.iter().skip(shift).copied().collect();
        out.resize(h, 0.0);
        out
    };
    let xs = [shift_block(&x[..h]), shift_block(&x[h..])].concat();
    let ys = [shift_block(&y[..h]), shift_block(&y[h..2 * h]), shift_block(&y[2 * h..])].concat();
    (xs, ys)
}

fn storage_is_usable(spec: &BatterySpec) -> bool {
    spec.p_max > 0.0 && spec.e_max > spec.e_min
}

/// Plan battery power over `forecast.len()` steps from stored energy `e`.
pub fn mpc_step(forecast: &[f64], e: f64, spec: &BatterySpec, dt: f64, terminal_soc: bool) -> Result<MpcPlan> {
    spec.validate()?;
    if forecast.is_empty() || forecast.iter().any(|v| !v.is_finite()) {
        return invalid("forecast must be non-empty and finite");
    }
    if !(dt > 0.0) {
        return invalid(format!("time step {dt} h must be positive"));
    }
    if !storage_is_usable(spec) {
        return Ok(idle_plan(forecast));
    }
    HorizonQp::new(forecast.len(), spec, dt, terminal_soc)?.solve(forecast, e, 0)
}

fn idle_plan(forecast: &[f64]) -> MpcPlan {
    MpcPlan {
        p_b: vec![0.0; forecast.len()],
        objective: forecast.iter().map(|f| f * f).sum(),
        iterations: 0,
    }
}

/// Where the controller's forecasts come from.
#[derive(Debug, Clone)]
pub enum MpcSource {
    /// Model forecasts. `history` seeds the lags with loads before the
    /// first controlled step.
    Forecast {
        model: Forecaster,
        start: DateTime<Utc>,
        step_secs: i64,
        history: Vec<f64>,
    },
    /// The true future loads, truncated at the end of the series.
    Prescient(Vec<f64>),
}

/// Receding-horizon controller.
pub struct MpcPolicy {
    source: MpcSource,
    config: MpcConfig,
    recent: VecDeque<f64>,
    plan: Vec<f64>,
    next: usize,
    qp: Option<HorizonQp>,
    solves: usize,
    qp_iterations: usize,
}

pub fn make_mpc(source: MpcSource, config: MpcConfig) -> Result<MpcPolicy> {
    config.validate()?;
    let mut recent = VecDeque::with_capacity(N_LAGS + 1);
    if let MpcSource::Forecast { history, model, .. } = &source {
        if model.horizon < config.horizon {
            return invalid(format!(
                "forecaster covers {} steps but the MPC horizon is {}",
                model.horizon, config.horizon
            ));
        }
        for &v in history.iter().rev().take(N_LAGS).rev() {
            recent.push_back(v);
        }
    }
    Ok(MpcPolicy {
        source,
        config,
        recent,
        plan: Vec::new(),
        next: 0,
        qp: None,
        solves: 0,
        qp_iterations: 0,
    })
}

impl MpcPolicy {
    /// Number of QP solves and their total iterations so far.
    pub fn solve_stats(&self) -> (usize, usize) {
        (self.solves, self.qp_iterations)
    }

    fn forecast(&self, t: usize) -> Result<Vec<f64>> {
        let h = self.config.horizon;
        match &self.source {
            MpcSource::Prescient(values) => {
                if t >= values.len() {
                    return invalid(format!("prescient MPC asked for step {t} beyond the series"));
                }
                Ok(values[t..(t + h).min(values.len())].to_vec())
            }
            MpcSource::Forecast {
                model, start, step_secs, ..
            } => {
                if self.recent.len() >= N_LAGS {
                    let recent: Vec<f64> = self.recent.iter().copied().collect();
                    let origin = *start + Duration::seconds(step_secs * t as i64);
                    let mut f = model.predict(&recent, origin)?;
                    f.truncate(h);
                    Ok(f)
                } else {
                    // Persistence until enough lags are available; the
                    // training mean before anything has been observed.
                    let last = self.recent.back().copied().unwrap_or(model.train_mean);
                    Ok(vec![last; h])
                }
            }
        }
    }
}

impl Policy for MpcPolicy {
    fn action(&mut self, t: usize, p: f64, e: f64, spec: &BatterySpec, dt: f64) -> Result<f64> {
        let since = self.next;
        if self.plan.is_empty() || self.next >= self.config.resolve_every || self.next >= self.plan.len() {
            let forecast = self.forecast(t)?;
            let plan = if storage_is_usable(spec) {
                let h = forecast.len();
                let reuse = self
                    .qp
                    .as_ref()
                    .is_some_and(|q| q.matches(h, spec, dt, self.config.terminal_soc));
                if !reuse {
                    self.qp = Some(HorizonQp::new(h, spec, dt, self.config.terminal_soc)?);
                }
                let qp = self.qp.as_mut().expect("horizon QP just built");
                qp.solve(&forecast, e, if reuse { since } else { 0 })
                    .map_err(|err| Error::Numerical(format!("MPC at step {t}: {err}")))?
            } else {
                idle_plan(&forecast)
            };
            self.solves += 1;
            self.qp_iterations += plan.iterations;
            self.plan = plan.p_b;
            self.next = 0;
        }
        let a = self.plan[self.next];
        self.next += 1;
        if self.recent.len() == N_LAGS {
            self.recent.pop_front();
        }
        self.recent.push_back(p);
        Ok(spec.clamp_action(e, a, dt))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::battery::simulate;
    use approx::assert_relative_eq;
    use chrono::TimeZone;

    fn start() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2023, 1, 2, 0, 0, 0).unwrap()
    }

    #[test]
    fn constant_series_predicts_constant() {
        let s = PowerSeries::hourly("c", start(), vec![7.5; 24 * 10]).unwrap();
        let f = fit_forecaster(&s, &ForecasterConfig::default()).unwrap();
        let pred = f.predict(&[7.5; 24], start()).unwrap();
        for p in pred {
            assert_relative_eq!(p, 7.5, epsilon = 1e-9);
        }
    }

    #[test]
    fn periodic_series_fits_in_sample() {
        let v: Vec<f64> = (0..24 * 30)
            .map(|t| 10.0 + 5.0 * (2.0 * std::f64::consts::PI * (t % 24) as f64 / 24.0).sin())
            .collect();
        let s = PowerSeries::hourly("p", start(), v.clone()).unwrap();
        let f = fit_forecaster(&s, &ForecasterConfig { horizon: 24, ridge: 1e-10 }).unwrap();
        let mut worst: f64 = 0.0;
        for t in 24..v.len() - 24 {
            let pred = f.predict(&v[t - 24..t], s.timestamp(t)).unwrap();
            for (h, p) in pred.iter().enumerate() {
                worst = worst.max((p - v[t + h]).abs());
            }
        }
        assert!(worst < 1e-6 * 5.0, "worst in-sample error {worst}");
    }

    #[test]
    fn short_series_rejected() {
        let s = PowerSeries::hourly("s", start(), vec![1.0; 40]).unwrap();
        assert!(fit_forecaster(&s, &ForecasterConfig::default()).is_err());
    }

    fn spec() -> BatterySpec {
        BatterySpec::full_window(20.0, 5.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn flat_forecast_two_steps() {
        // Full 20 kWh, 5 kW: discharge at the power limit on both steps.
        let plan = mpc_step(&[10.0, 10.0], 20.0, &spec(), 1.0, false).unwrap();
        assert_relative_eq!(plan.p_b[0], -5.0, epsilon = 1e-5);
        assert_relative_eq!(plan.p_b[1], -5.0, epsilon = 1e-5);
        // With 6 kWh the energy is split evenly.
        let plan = mpc_step(&[10.0, 10.0], 6.0, &spec(), 1.0, false).unwrap();
        assert_relative_eq!(plan.p_b[0], -3.0, epsilon = 1e-5);
        assert_relative_eq!(plan.p_b[1], -3.0, epsilon = 1e-5);
    }

    #[test]
    fn zero_capacity_is_idle() {
        let plan = mpc_step(&[3.0, 4.0], 0.0, &BatterySpec::empty(), 1.0, false).unwrap();
        assert_eq!(plan.p_b, vec![0.0, 0.0]);
    }

    #[test]
    fn horizon_one_is_a_clamp() {
        let s = BatterySpec::full_window(10.0, 4.0, 0.9, 0.9).unwrap();
        for (f, e) in [(3.0, 5.0), (9.0, 5.0), (9.0, 1.0), (-2.0, 9.5), (-6.0, 2.0)] {
            let plan = mpc_step(&[f], e, &s, 1.0, false).unwrap();
            let expect = s.clamp_action(e, -f, 1.0);
            assert_relative_eq!(plan.p_b[0], expect, epsilon = 1e-5);
        }
    }

    #[test]
    fn prescient_policy_is_deterministic() {
        let v: Vec<f64> = (0..72).map(|t| 5.0 + ((t * 7) % 11) as f64).collect();
        let series = PowerSeries::hourly("d", start(), v.clone()).unwrap();
        let run = || {
            let mut pol = make_mpc(MpcSource::Prescient(v.clone()), MpcConfig::default()).unwrap();
            simulate(&series, &spec(), &mut pol).unwrap()
        };
        assert_eq!(run(), run());
    }
}
