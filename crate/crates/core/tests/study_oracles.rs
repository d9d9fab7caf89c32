//! Fleet study bookkeeping: quantile tables, peak ratios, the zero-battery
//! identity and the per-meter result cache.

use proptest::prelude::*;

use peakshave::evaluate::{
    evaluate_meter, fleet_quantiles, lcoe_report, quantiles, run_study, Controller, StudyConfig, DEFAULT_LEVELS,
};
use peakshave::optimize::DeConfig;
use peakshave::sizing::{SizingMethod, SizingOptions};
use peakshave::timeseries::{split, synth_fleet, PowerSeries, SplitSpec};

fn fleet(seed: u64, meters: usize, days: usize) -> Vec<(PowerSeries, PowerSeries)> {
    synth_fleet(seed, meters, days)
        .unwrap()
        .iter()
        .map(|s| split(s, SplitSpec::FirstMonths(2)).unwrap())
        .collect()
}

fn quick_config() -> StudyConfig {
    StudyConfig {
        de: DeConfig {
            population: Some(12),
            max_generations: 6,
            seed: 7,
            ..DeConfig::default()
        },
        ..StudyConfig::default()
    }
}

/// Smallest value with at least `ceil(q n)` values at or below it.
fn rank_oracle(values: &[f64], q: f64) -> f64 {
    let mut best = f64::INFINITY;
    for &v in values {
        let below = values.iter().filter(|&&w| w <= v).count() as f64;
        if below >= (q * values.len() as f64).ceil() && v < best {
            best = v;
        }
    }
    best
}

proptest! {
    #[test]
    fn quantiles_match_the_rank_definition(
        values in prop::collection::vec(0.0f64..3.0, 1..120),
        levels in prop::collection::vec(0.0f64..=1.0, 1..8),
    ) {
        let got = quantiles(&values, &levels).unwrap();
        for (q, v) in levels.iter().zip(&got) {
            prop_assert_eq!(*v, rank_oracle(&values, *q));
        }
    }

    #[test]
    fn quantile_rows_are_monotone(rows in prop::collection::vec(prop::collection::vec(0.0f64..3.0, 1..60), 1..6)) {
        let named: Vec<(String, Vec<f64>)> = rows.into_iter().enumerate().map(|(i, r)| (format!("m{i}"), r)).collect();
        for row in fleet_quantiles(&named, &DEFAULT_LEVELS).unwrap() {
            prop_assert!(row.values.windows(2).all(|w| w[0] <= w[1]));
        }
    }
}

#[test]
fn study_cells_are_self_consistent() {
    let pairs = fleet(11, 2, 92);
    let config = quick_config();
    let dir = tempfile::tempdir().unwrap();
    let study = run_study(&pairs, &config, Some(dir.path())).unwrap();
    assert!(study.failures.is_empty());
    assert_eq!(study.meters.len(), 2);
    for m in &study.meters {
        assert_eq!(m.cells.len(), Controller::ALL.len() * 2);
        for c in &m.cells {
            for (r, &d) in c.ratios.ratios.iter().zip(&c.ratios.days) {
                assert!((r - c.daily_peaks[d] / c.reference_peaks[d]).abs() <= 1e-12);
            }
            assert_eq!(c.ratios.ratios.len() + c.ratios.excluded, c.daily_peaks.len());
            assert!((c.costs.recompute_lcoe() - c.lcoe_test).abs() <= 1e-12 * c.lcoe_test);
            if c.controller == Controller::MpcPrescient {
                assert!(c.ratios.ratios.iter().all(|&r| r == 1.0));
            }
        }
    }
    for row in lcoe_report(&study).unwrap() {
        assert_eq!(row.gap, row.lcoe_test - row.lcoe_sizing);
        assert_eq!(row.not_profitable, row.lcoe_normalized > 1.0);
    }
    for t in &study.quantiles {
        assert!(t.pooled.windows(2).all(|w| w[0] <= w[1]));
    }

    // A second run reads every meter back from the cache unchanged.
    let again = run_study(&pairs, &config, Some(dir.path())).unwrap();
    assert_eq!(
        serde_json::to_string(&again).unwrap(),
        serde_json::to_string(&study).unwrap()
    );
}

#[test]
fn without_a_battery_every_controller_is_business_as_usual() {
    let (train, test) = fleet(5, 1, 92).remove(0);
    let config = StudyConfig {
        sizing: SizingOptions {
            e_cap: Some(0.0),
            p_cap: Some(0.0),
            ..SizingOptions::default()
        },
        ..quick_config()
    };
    let m = evaluate_meter(&train, &test, &config).unwrap();
    for s in &m.sizings {
        assert_eq!((s.e_bat, s.p_bat), (0.0, 0.0));
    }
    for method in [SizingMethod::Prescient, SizingMethod::Rbc] {
        for controller in Controller::ALL {
            let c = m.cell(controller, method).unwrap();
            assert_eq!(c.max_abs_battery_power, 0.0, "{controller}");
            assert!((c.lcoe_test - m.bau_test_lcoe).abs() <= 1e-12 * m.bau_test_lcoe);
            assert!((c.lcoe_normalized - m.bau_test_lcoe / m.bau_train_lcoe).abs() <= 1e-12);
            assert!(c.ratios.ratios.iter().all(|&r| r == 1.0));
        }
    }
}
