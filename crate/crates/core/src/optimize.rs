//! Differential evolution (DE/rand/1/bin) and RBC parameter tuning.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::battery::{simulate_values, BatterySpec};
use crate::error::{invalid, Result};
use crate::policies::{make_rbc, RbcParams, WINDOW_RANGE};
use crate::risk::{daily_peaks, scvar, stratum_count};
use crate::timeseries::{Calendar, PowerSeries};

/// Box constraints of the search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub bounds: Vec<(f64, f64)>,
    /// Dimensions rounded to the nearest integer before evaluation.
    #[serde(default)]
    pub integer_dims: Vec<usize>,
}

impl SearchSpace {
    pub fn new(bounds: Vec<(f64, f64)>) -> Self {
        Self {
            bounds,
            integer_dims: Vec::new(),
        }
    }

    pub fn with_integer(mut self, dim: usize) -> Self {
        self.integer_dims.push(dim);
        self
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    fn validate(&self) -> Result<()> {
        if self.bounds.is_empty() {
            return invalid("search space has no dimensions");
        }
        for (i, &(lo, hi)) in self.bounds.iter().enumerate() {
            // lo == hi pins the dimension.
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return invalid(format!("dimension {i}: need finite lo <= hi, got [{lo}, {hi}]"));
            }
        }
        if let Some(&d) = self.integer_dims.iter().find(|&&d| d >= self.dim()) {
            return invalid(format!("integer dimension {d} out of range"));
        }
        Ok(())
    }

    fn decode(&self, x: &[f64]) -> Vec<f64> {
        let mut out = x.to_vec();
        for &d in &self.integer_dims {
            out[d] = out[d].round().clamp(self.bounds[d].0.ceil(), self.bounds[d].1.floor());
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeConfig {
    /// Population size; `None` uses 15 per dimension.
    pub population: Option<usize>,
    /// Differential weight F.
    pub mutation: f64,
    /// Crossover probability CR.
    pub crossover: f64,
    pub max_generations: usize,
    /// Stop once the population's objective spread falls below this
    /// fraction of its mean magnitude.
    pub tolerance: f64,
    /// Hard cap on objective evaluations, including the initial population.
    pub max_evaluations: Option<usize>,
    pub seed: u64,
}

impl Default for DeConfig {
    fn default() -> Self {
        Self {
            population: None,
            mutation: 0.7,
            crossover: 0.9,
            max_generations: 200,
            tolerance: 1e-3,
            max_evaluations: None,
            seed: 0,
        }
    }
}

impl DeConfig {
    pub fn population_for(&self, dim: usize) -> usize {
        self.population.unwrap_or(15 * dim)
    }

    fn validate(&self, dim: usize) -> Result<()> {
        let np = self.population_for(dim);
        if np < 4 {
            return invalid(format!("DE/rand/1 needs a population of at least 4, got {np}"));
        }
        if !(self.mutation > 0.0 && self.mutation < 2.0) {
            return invalid(format!("mutation factor {} outside (0, 2)", self.mutation));
        }
        if !(0.0..=1.0).contains(&self.crossover) {
            return invalid(format!("crossover rate {} outside [0, 1]", self.crossover));
        }
        if !(self.tolerance >= 0.0) {
            return invalid("tolerance must be non-negative");
        }
        if self.max_evaluations.is_some_and(|m| m < np) {
            return invalid("evaluation budget smaller than the population");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeResult {
    /// Best point, with integer dimensions rounded.
    pub x: Vec<f64>,
    pub f: f64,
    /// Best objective after initialisation and after each generation.
    pub history: Vec<f64>,
    pub evaluations: usize,
    pub generations: usize,
    pub converged: bool,
}

/// Minimise `objective` over the box with DE/rand/1/bin.
///
/// Trial vectors of a generation are drawn sequentially from the seeded RNG
/// and evaluated in parallel; selection happens after all evaluations, so
/// results do not depend on scheduling. Non-finite objective values count
/// as +inf.
pub fn minimize<F>(objective: F, space: &SearchSpace, config: &DeConfig) -> Result<DeResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    space.validate()?;
    let dim = space.dim();
    config.validate(dim)?;
    let np = config.population_for(dim);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let eval = |x: &Vec<f64>| {
        let v = objective(&space.decode(x));
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };

    let mut pop: Vec<Vec<f64>> = (0..np)
        .map(|_| space.bounds.iter().map(|&(lo, hi)| rng.gen_range(lo..=hi)).collect())
        .collect();
    let mut fit: Vec<f64> = pop.par_iter().map(eval).collect();
    let mut evaluations = np;
    let best_of = |fit: &[f64]| {
        fit.iter()
            .enumerate()
            .fold((0, f64::INFINITY), |(bi, bf), (i, &f)| if f < bf { (i, f) } else { (bi, bf) })
    };
    let mut history = vec![best_of(&fit).1];
    let mut generations = 0;
    let mut converged = spread_converged(&fit, config.tolerance);

    while !converged && generations < config.max_generations {
        if config.max_evaluations.is_some_and(|m| evaluations + np > m) {
            break;
        }
        let trials: Vec<Vec<f64>> = (0..np)
            .map(|i| {
                let mut picks = sample(&mut rng, np - 1, 3).into_vec();
                for p in &mut picks {
                    if *p >= i {
                        *p += 1;
                    }
                }
                let (a, b, c) = (&pop[picks[0]], &pop[picks[1]], &pop[picks[2]]);
                let forced = rng.gen_range(0..dim);
                (0..dim)
                    .map(|j| {
                        if j == forced || rng.gen::<f64>() < config.crossover {
                            let (lo, hi) = space.bounds[j];
                            (a[j] + config.mutation * (b[j] - c[j])).clamp(lo, hi)
                        } else {
                            pop[i][j]
                        }
                    })
                    .collect()
            })
            .collect();
        let trial_fit: Vec<f64> = trials.par_iter().map(eval).collect();
        evaluations += np;
        for (i, (x, f)) in trials.into_iter().zip(trial_fit).enumerate() {
            if f <= fit[i] {
                pop[i] = x;
                fit[i] = f;
            }
        }
        generations += 1;
        history.push(best_of(&fit).1);
        converged = spread_converged(&fit, config.tolerance);
    }

    let (bi, bf) = best_of(&fit);
    Ok(DeResult {
        x: space.decode(&pop[bi]),
        f: bf,
        history,
        evaluations,
        generations,
        converged,
    })
}

fn spread_converged(fit: &[f64], tol: f64) -> bool {
    if fit.iter().any(|f| !f.is_finite()) {
        return false;
    }
    let n = fit.len() as f64;
    let mean = fit.iter().sum::<f64>() / n;
    let var = fit.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / n;
    var.sqrt() <= tol * mean.abs()
}

/// What the RBC is tuned to minimise on the training set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TuneObjective {
    /// Mean of the daily peaks.
    MeanDailyPeak,
    /// Month-stratified CVaR of the daily peaks.
    Scvar { alpha: f64 },
}

/// Default search box for the RBC vector `[window, upper, lower]`.
///
/// The upper level is searched in [0.5, 1] and the lower in [0, 0.5], so
/// every candidate satisfies `lower <= upper`.
pub fn rbc_search_space() -> SearchSpace {
    SearchSpace::new(vec![
        (WINDOW_RANGE.0 as f64, WINDOW_RANGE.1 as f64),
        (0.5, 1.0),
        (0.0, 0.5),
    ])
    .with_integer(0)
}

/// Objective value of one RBC parameterisation on a training series.
pub fn rbc_objective(
    series: &PowerSeries,
    calendar: &Calendar,
    spec: &BatterySpec,
    params: RbcParams,
    kind: TuneObjective,
) -> Result<f64> {
    let mut rbc = make_rbc(params)?;
    let sim = simulate_values(series.values(), series.dt(), spec, &mut rbc)?;
    let archive = daily_peaks(&sim.grid, calendar)?;
    match kind {
        TuneObjective::MeanDailyPeak => Ok(archive.mean()),
        TuneObjective::Scvar { alpha } => scvar(&archive, alpha),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub params: RbcParams,
    pub objective: f64,
    pub history: Vec<f64>,
    pub evaluations: usize,
}

/// Tune the RBC thresholds on `train` for a fixed battery.
pub fn tune_rbc(
    train: &PowerSeries,
    spec: &BatterySpec,
    kind: TuneObjective,
    config: &DeConfig,
) -> Result<TuneResult> {
    spec.validate()?;
    let calendar = train.calendar();
    if let TuneObjective::Scvar { alpha } = kind {
        if !(0.0..1.0).contains(&alpha) {
            return invalid(format!("risk level {alpha} outside [0, 1)"));
        }
        if stratum_count(alpha, calendar.n_days(), calendar.n_months()) == 0 {
            // Produces the descriptive error.
            let archive = daily_peaks(train.values(), &calendar)?;
            scvar(&archive, alpha)?;
        }
    }
    let space = rbc_search_space();
    let res = minimize(
        |x| {
            RbcParams::from_search(x)
                .and_then(|p| rbc_objective(train, &calendar, spec, p, kind))
                .unwrap_or(f64::INFINITY)
        },
        &space,
        config,
    )?;
    Ok(TuneResult {
        params: RbcParams::from_search(&res.x)?,
        objective: res.f,
        history: res.history,
        evaluations: res.evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timeseries::synth_fleet;

    fn sphere(x: &[f64]) -> f64 {
        x.iter().map(|v| v * v).sum()
    }

    #[test]
    fn one_dimensional_quadratic() {
        let space = SearchSpace::new(vec![(0.0, 5.0)]);
        let cfg = DeConfig {
            population: Some(10),
            tolerance: 0.0,
            max_generations: 100,
            ..DeConfig::default()
        };
        let r = minimize(|x| (x[0] - 2.0).powi(2), &space, &cfg).unwrap();
        assert!((r.x[0] - 2.0).abs() < 1e-3, "{:?}", r.x);
    }

    #[test]
    fn deterministic_and_elitist() {
        let space = SearchSpace::new(vec![(-5.0, 5.0); 3]);
        let cfg = DeConfig {
            seed: 9,
            max_generations: 30,
            ..DeConfig::default()
        };
        let a = minimize(sphere, &space, &cfg).unwrap();
        let b = minimize(sphere, &space, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn integer_dims_and_bounds() {
        let space = SearchSpace::new(vec![(0.0, 10.0), (-1.0, 1.0)]).with_integer(0);
        let seen = std::sync::Mutex::new(Vec::new());
        let r = minimize(
            |x| {
                seen.lock().unwrap().push(x.to_vec());
                (x[0] - 3.4).abs() + x[1].abs()
            },
            &space,
            &DeConfig {
                max_generations: 20,
                ..DeConfig::default()
            },
        )
        .unwrap();
        assert_eq!(r.x[0], 3.0);
        for x in seen.into_inner().unwrap() {
            assert_eq!(x[0], x[0].round());
            assert!((0.0..=10.0).contains(&x[0]) && (-1.0..=1.0).contains(&x[1]));
        }
    }

    #[test]
    fn non_finite_rejected() {
        let space = SearchSpace::new(vec![(-1.0, 1.0)]);
        let r = minimize(
            |x| if x[0] < 0.0 { f64::NAN } else { x[0] },
            &space,
            &DeConfig {
                population: Some(8),
                max_generations: 50,
                ..DeConfig::default()
            },
        )
        .unwrap();
        assert!(r.x[0] >= 0.0 && r.f.is_finite());
    }

    #[test]
    fn invalid_configs() {
        let space = SearchSpace::new(vec![(0.0, 1.0)]);
        let small = DeConfig {
            population: Some(3),
            ..DeConfig::default()
        };
        assert!(minimize(sphere, &space, &small).is_err());
        let bad_f = DeConfig {
            mutation: 2.5,
            ..DeConfig::default()
        };
        assert!(minimize(sphere, &space, &bad_f).is_err());
        assert!(minimize(sphere, &SearchSpace::new(vec![(1.0, 0.0)]), &DeConfig::default()).is_err());
    }

    fn quick() -> DeConfig {
        DeConfig {
            population: Some(12),
            max_generations: 15,
            seed: 3,
            ..DeConfig::default()
        }
    }

    #[test]
    fn tuning_reduces_mean_daily_peak() {
        let train = &synth_fleet(5, 1, 90).unwrap()[0];
        let spec = BatterySpec::full_window(200.0, 40.0, 0.95, 0.95).unwrap();
        let cal = train.calendar();
        let baseline = daily_peaks(train.values(), &cal).unwrap().mean();
        let r = tune_rbc(train, &spec, TuneObjective::MeanDailyPeak, &quick()).unwrap();
        assert!(r.objective < baseline, "{} vs {baseline}", r.objective);
        let again = rbc_objective(train, &cal, &spec, r.params, TuneObjective::MeanDailyPeak).unwrap();
        assert_eq!(again, r.objective);
    }

    #[test]
    fn zero_battery_objective_is_flat() {
        let train = &synth_fleet(5, 1, 90).unwrap()[0];
        let cal = train.calendar();
        let baseline = daily_peaks(train.values(), &cal).unwrap().mean();
        let r = tune_rbc(train, &BatterySpec::empty(), TuneObjective::MeanDailyPeak, &quick()).unwrap();
        assert_eq!(r.objective, baseline);
    }

    #[test]
    fn scvar_needs_enough_days() {
        let train = &synth_fleet(5, 1, 60).unwrap()[0];
        let short = train.slice(0, 24 * 35).unwrap();
        let spec = BatterySpec::full_window(100.0, 20.0, 0.95, 0.95).unwrap();
        assert!(tune_rbc(&short, &spec, TuneObjective::Scvar { alpha: 0.95 }, &quick()).is_err());
    }
}
