//! Acceptance checks. Runs without the libtest harness so every criterion
//! prints one PASS/FAIL line; the process fails if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use chrono::{TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};

use peakshave::battery::{simulate, simulate_values, BatterySpec, FEAS_TOL};
use peakshave::bench::run_bench;
use peakshave::economics::{evaluate_costs, grid_revenue, opex, peak_shifted_tariff, CostModel, TariffModel};
use peakshave::evaluate::{evaluate_meter, run_study, Controller, StudyConfig, DEFAULT_LEVELS};
use peakshave::lp::{build_prescient_lp, solve_dense, solve_first_order, LpBuilder, LpProblem, LpStatus, PdhgOptions, PrescientBattery};
use peakshave::optimize::{minimize, DeConfig, SearchSpace};
use peakshave::policies::{make_rbc, RbcParams};
use peakshave::risk::{cvar, cvar_min_form, risk_envelope_weights, scvar, stratum_count, LossArchive};
use peakshave::sizing::{SizingMethod, SizingOptions};
use peakshave::timeseries::{split, synth_fleet, PowerSeries, SplitSpec};

type Outcome = Result<String, String>;

fn check(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn rbc_speed() -> Outcome {
    let r = run_bench(8760, 168, 200).map_err(|e| e.to_string())?;
    let t = &r.rbc_simulation;
    let detail = format!(
        "{:.1} ± {:.1} µs mean over {} runs of 8760 steps (min {:.1} µs, {})",
        t.mean_us, t.std_us, t.reps, t.min_us, r.cpu
    );
    check(t.reps >= 100 && t.mean_us <= 1200.0, &detail)?;
    Ok(detail)
}

fn cvar_forms() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let dist = LogNormal::new(0.0, 0.8).unwrap();
    let mut worst = 0.0f64;
    for i in 0..100 {
        // Sizes where the α tail holds a whole number of samples.
        let n = 20 * rng.gen_range(1..=25);
        let alpha = [0.5, 0.9, 0.95][i % 3];
        let raw: Vec<f64> = (0..n).map(|_| dist.sample(&mut rng)).collect();
        let mean = raw.iter().sum::<f64>() / n as f64;
        let l: Vec<f64> = raw.iter().map(|x| x / mean).collect();
        let e = |r: peakshave::Result<f64>| r.map_err(|e| e.to_string());
        let min_form = e(cvar_min_form(&l, alpha))?;
        let w = risk_envelope_weights(&l, alpha).map_err(|e| e.to_string())?;
        let weighted: f64 = w.iter().zip(&l).map(|(w, l)| w * l).sum();
        let top = e(cvar(&l, alpha))?;
        worst = worst.max((min_form - top).abs()).max((weighted - top).abs());
    }
    let detail = format!("largest disagreement {worst:.2e} over 100 samples");
    check(worst <= 1e-6, &detail)?;
    Ok(detail)
}

fn scvar_arithmetic() -> Outcome {
    check(stratum_count(0.95, 182, 6) == 1, "k_m != 1")?;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..20 {
        let months: Vec<usize> = (0..182).map(|d| d * 6 / 182).collect();
        let losses: Vec<f64> = (0..182).map(|_| rng.gen_range(0.0..100.0)).collect();
        let mut maxima = [f64::MIN; 6];
        for (l, &m) in losses.iter().zip(&months) {
            maxima[m] = maxima[m].max(*l);
        }
        let expected = maxima.iter().sum::<f64>() / 6.0;
        let got = scvar(&LossArchive::new(losses, months).unwrap(), 0.95).map_err(|e| e.to_string())?;
        check(got == expected, format!("SCVaR {got} vs mean of monthly maxima {expected}"))?;
    }
    Ok("k_m = 1; SCVaR equals the mean of monthly maxima on 20 archives".into())
}

fn random_lp(rng: &mut ChaCha8Rng) -> LpProblem {
    let n = rng.gen_range(2..=20);
    let m = rng.gen_range(1..=n);
    let mut b = LpBuilder::new();
    let x0: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    for _ in 0..n {
        b.add_var(-2.0 - rng.gen::<f64>() * 3.0, 2.0 + rng.gen::<f64>() * 3.0, rng.gen_range(-1.0..1.0));
    }
    let n_eq = rng.gen_range(0..=m / 3);
    for r in 0..m {
        let mut terms = Vec::new();
        for j in 0..n {
            if rng.gen_bool(0.6) {
                terms.push((j, rng.gen_range(-1.0..1.0)));
            }
        }
        let ax: f64 = terms.iter().map(|&(j, a)| a * x0[j]).sum();
        if r < n_eq {
            b.add_eq(&terms, ax);
        } else {
            b.add_le(&terms, ax + rng.gen_range(0.1..1.0));
        }
    }
    b.build().unwrap()
}

fn lp_agreement() -> Outcome {
    let pdhg = PdhgOptions {
        tol: 1e-9,
        ..PdhgOptions::default()
    };
    let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE);
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worst = 0.0f64;
    for i in 0..50 {
        let p = random_lp(&mut rng);
        let d = solve_dense(&p, 1e-10).map_err(|e| e.to_string())?;
        let f = solve_first_order(&p, &pdhg).map_err(|e| e.to_string())?;
        check(d.status == LpStatus::Optimal && f.status == LpStatus::Optimal, format!("LP {i}: not solved"))?;
        worst = worst.max(rel(d.objective, f.objective));
    }
    check(worst <= 1e-6, format!("random LPs: worst relative gap {worst:.2e}"))?;

    let mut day = vec![2.0; 24];
    day[12] = 10.0;
    let s = PowerSeries::hourly("toy", Utc.with_ymd_and_hms(2023, 5, 1, 0, 0, 0).unwrap(), day).unwrap();
    let tariff = TariffModel {
        import: 0.1,
        export: 0.0,
        peak: 50.0,
    };
    let toy = build_prescient_lp(&s, &tariff, &CostModel::default(), &PrescientBattery::from_train(&s, 1.0, 1.0), Some((8.0, 8.0)))
        .map_err(|e| e.to_string())?;
    let d = solve_dense(&toy.problem, 1e-10).map_err(|e| e.to_string())?;
    let f = solve_first_order(&toy.problem, &pdhg).map_err(|e| e.to_string())?;
    let toy_gap = rel(d.objective, f.objective);
    check(toy_gap <= 1e-6, format!("single-day toy: relative gap {toy_gap:.2e}"))?;

    let fleet = synth_fleet(21, 3, 60).map_err(|e| e.to_string())?;
    let tariff = TariffModel {
        import: 0.165,
        export: 0.0,
        peak: 20.0,
    };
    let cost = CostModel::default();
    let mut traces = 0;
    for s in &fleet {
        let s = s.slice(0, 24 * 3).unwrap();
        let battery = PrescientBattery::from_train(&s, 0.95, 0.95);
        let lp = build_prescient_lp(&s, &tariff, &cost, &battery, None).map_err(|e| e.to_string())?;
        let opt = solve_dense(&lp.problem, 1e-10).map_err(|e| e.to_string())?;
        for _ in 0..10 {
            let e = rng.gen_range(0.0..battery.e_cap.min(500.0));
            let p = rng.gen_range(0.0..battery.p_cap);
            let params = RbcParams::new(rng.gen_range(1..=72), rng.gen_range(0.5..1.0), rng.gen_range(0.0..0.5)).unwrap();
            let spec = BatterySpec::full_window(e, p, 0.95, 0.95).unwrap();
            let sim = simulate(&s, &spec, &mut make_rbc(params).unwrap()).map_err(|e| e.to_string())?;
            let costs = evaluate_costs(&s, &sim.grid, e, p, &tariff, &cost).map_err(|e| e.to_string())?;
            let x = lp.layout.point_from_trace(s.values(), &sim, e, p).map_err(|e| e.to_string())?;
            check(lp.problem.max_violation(&x) <= 1e-7, "RBC trace is not LP-feasible")?;
            check(
                opt.objective + lp.fixed_term <= costs.lcoe + 1e-9 * costs.lcoe,
                format!("LP optimum {} above RBC trace LCOE {}", opt.objective + lp.fixed_term, costs.lcoe),
            )?;
            traces += 1;
        }
    }
    Ok(format!(
        "50 random LPs (worst gap {worst:.2e}), toy gap {toy_gap:.2e}, {traces} RBC traces bounded below"
    ))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// One study on a 10-meter synthetic year, trained on the first six months,
/// feeds criteria 5 and 9.
fn fleet_study() -> Result<peakshave::evaluate::StudyResult, String> {
    let pairs: Vec<(PowerSeries, PowerSeries)> = synth_fleet(42, 10, 365)
        .map_err(|e| e.to_string())?
        .iter()
        .map(|s| split(s, SplitSpec::FirstMonths(6)).unwrap())
        .collect();
    let config = StudyConfig {
        controllers: vec![Controller::Rbc, Controller::RbcAdv],
        sizings: vec![SizingMethod::Prescient, SizingMethod::Rbc],
        de: DeConfig {
            seed: 42,
            ..DeConfig::default()
        },
        ..StudyConfig::default()
    };
    let study = run_study(&pairs, &config, None).map_err(|e| e.to_string())?;
    check(study.failures.is_empty(), format!("{} meters failed", study.failures.len()))?;
    Ok(study)
}

fn prescient_optimism(study: &peakshave::evaluate::StudyResult) -> Outcome {
    let mut gaps = (Vec::new(), Vec::new());
    for m in &study.meters {
        let pre = m.sizing(SizingMethod::Prescient).unwrap();
        let rbc = m.sizing(SizingMethod::Rbc).unwrap();
        check(
            pre.lcoe_sizing <= rbc.lcoe_sizing + 1e-6,
            format!("{}: prescient sizing LCOE {} above RBC {}", m.meter, pre.lcoe_sizing, rbc.lcoe_sizing),
        )?;
        gaps.0.push(m.cell(Controller::Rbc, SizingMethod::Prescient).unwrap().lcoe_test - pre.lcoe_sizing);
        gaps.1.push(m.cell(Controller::Rbc, SizingMethod::Rbc).unwrap().lcoe_test - rbc.lcoe_sizing);
    }
    let (pre, rbc) = (median(gaps.0), median(gaps.1));
    let detail = format!("(a) holds on {} meters; (b) median gap prescient {pre:.5} vs RBC {rbc:.5} USD/kWh", study.meters.len());
    check(rbc < pre, &detail)?;
    Ok(detail)
}

fn zero_battery() -> Outcome {
    let (train, test) = split(&synth_fleet(8, 1, 150).unwrap()[0], SplitSpec::FirstMonths(3)).unwrap();
    let config = StudyConfig {
        sizing: SizingOptions {
            e_cap: Some(0.0),
            p_cap: Some(0.0),
            ..SizingOptions::default()
        },
        de: DeConfig {
            max_generations: 5,
            ..DeConfig::default()
        },
        ..StudyConfig::default()
    };
    let m = evaluate_meter(&train, &test, &config).map_err(|e| e.to_string())?;
    let mut cells = 0;
    for c in &m.cells {
        check((c.e_bat, c.p_bat) == (0.0, 0.0), "non-zero size")?;
        check(c.max_abs_battery_power == 0.0, format!("{} moved the battery", c.controller))?;
        check(
            c.lcoe_test == m.bau_test_lcoe,
            format!("{}: LCOE {} vs BaU {}", c.controller, c.lcoe_test, m.bau_test_lcoe),
        )?;
        cells += 1;
    }
    check(cells == 8, "missing cells")?;
    Ok("rbc, rbc-adv, mpc and mpc-prescient idle; test LCOE equals BaU under both sizings".into())
}

fn feasibility_fuzz() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for i in 0..10_000 {
        let n = rng.gen_range(1..=240);
        let values: Vec<f64> = (0..n).map(|_| rng.gen_range(-30.0..200.0)).collect();
        let e = if rng.gen_bool(0.05) { 0.0 } else { rng.gen_range(0.0..300.0) };
        let p = if rng.gen_bool(0.05) { 0.0 } else { rng.gen_range(0.0..100.0) };
        let lo = rng.gen_range(0.0..0.4) * e;
        let hi = rng.gen_range(0.6..=1.0) * e;
        let e0 = rng.gen_range(lo..=hi);
        let spec = BatterySpec::new(e, p, rng.gen_range(0.5..=1.0), rng.gen_range(0.5..=1.0), lo, hi, p, e0).unwrap();
        let params = RbcParams::new(rng.gen_range(1..=336), rng.gen_range(0.5..=1.0), rng.gen_range(0.0..=0.5)).unwrap();
        let dt = [0.25, 0.5, 1.0][rng.gen_range(0..3)];
        let sim = simulate_values(&values, dt, &spec, &mut make_rbc(params).unwrap()).map_err(|e| e.to_string())?;
        check(sim.bound_violation(&spec) == 0.0, format!("run {i}: bound violation"))?;
        let r = sim.energy_balance_residual(&spec, dt);
        check(r <= FEAS_TOL, format!("run {i}: energy residual {r:.2e}"))?;
        worst = worst.max(r);
    }
    Ok(format!("10000 runs, no violations, worst energy residual {worst:.2e} kWh"))
}

fn tariff_calibration() -> Outcome {
    let base = TariffModel {
        import: 0.2,
        export: 0.0,
        peak: 5.75,
    };
    let fleet = synth_fleet(13, 5, 120).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut profiles: Vec<PowerSeries> = fleet;
    for k in 0..5 {
        let v: Vec<f64> = (0..24 * 60).map(|_| rng.gen_range(0.0..50.0) * (1 + k) as f64).collect();
        profiles.push(PowerSeries::hourly(format!("r{k}"), Utc.with_ymd_and_hms(2022, 11, 20, 0, 0, 0).unwrap(), v).unwrap());
    }
    let mut worst = 0.0f64;
    for s in &profiles {
        let t = peak_shifted_tariff(&base, 0.07, s).map_err(|e| e.to_string())?;
        check((t.import - 0.165).abs() <= 1e-15, format!("import price {}", t.import))?;
        let o = opex(s.values(), s.dt(), &s.calendar().month_of_step, &base).map_err(|e| e.to_string())?;
        let before = grid_revenue(&o, 0.07, base.peak);
        let after = grid_revenue(&o, 0.035, t.peak);
        worst = worst.max((before - after).abs() / before);
    }
    let detail = format!("import 165 USD/MWh; revenue mismatch {worst:.2e} relative on {} profiles", profiles.len());
    check(worst <= 1e-9, &detail)?;
    Ok(detail)
}

fn adversarial_tails(study: &peakshave::evaluate::StudyResult) -> Outcome {
    let table = |c: Controller| {
        study
            .quantiles
            .iter()
            .find(|t| t.sizing == SizingMethod::Prescient && t.controller == c)
            .unwrap()
    };
    let (mean_t, adv_t) = (table(Controller::Rbc), table(Controller::RbcAdv));
    let i95 = DEFAULT_LEVELS.iter().position(|&l| l == 0.95).unwrap();
    let i99 = DEFAULT_LEVELS.iter().position(|&l| l == 0.99).unwrap();
    let (mut wins, mut at95, mut at99) = (0, 0, 0);
    for (a, m) in adv_t.per_meter.iter().zip(&mean_t.per_meter) {
        assert_eq!(a.meter, m.meter);
        let (w95, w99) = (a.values[i95] <= m.values[i95], a.values[i99] <= m.values[i99]);
        at95 += w95 as usize;
        at99 += w99 as usize;
        wins += (w95 && w99) as usize;
    }
    let n = adv_t.per_meter.len();
    let detail = format!(
        "adversarial RBC at or below mean-tuned RBC at q95 and q99 on {wins}/{n} meters (q95 alone {at95}/{n}, q99 alone {at99}/{n})"
    );
    check(wins as f64 >= 0.7 * n as f64, &detail)?;
    Ok(detail)
}

fn de_sphere() -> Outcome {
    let space = SearchSpace::new(vec![(-5.0, 5.0); 3]);
    // 2000 evaluations buy 100 generations of 20.
    let config = DeConfig {
        population: Some(20),
        seed: 1,
        tolerance: 0.0,
        max_evaluations: Some(2000),
        max_generations: usize::MAX,
        ..DeConfig::default()
    };
    let sphere = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>();
    let a = minimize(sphere, &space, &config).map_err(|e| e.to_string())?;
    let b = minimize(sphere, &space, &config).map_err(|e| e.to_string())?;
    check(a == b, "two runs with one seed differ")?;
    let detail = format!("f = {:.2e} after {} evaluations, repeatable", a.f, a.evaluations);
    check(a.f <= 1e-6 && a.evaluations <= 2000, &detail)?;
    Ok(detail)
}

fn run(n: usize, name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let t0 = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into()))
    });
    let secs = t0.elapsed().as_secs_f64();
    match outcome {
        Ok(d) => {
            println!("PASS {n:>2} {name}: {d} [{secs:.1} s]");
            true
        }
        Err(d) => {
            println!("FAIL {n:>2} {name}: {d} [{secs:.1} s]");
            false
        }
    }
}

fn main() -> ExitCode {
    let mut ok = true;
    ok &= run(1, "rbc simulation speed", rbc_speed);
    ok &= run(2, "cvar forms agree", cvar_forms);
    ok &= run(3, "scvar arithmetic", scvar_arithmetic);
    ok &= run(4, "lp backends and lower bound", lp_agreement);
    let t0 = Instant::now();
    let study = fleet_study();
    println!("     fleet study for 5 and 9 took {:.1} s", t0.elapsed().as_secs_f64());
    ok &= run(5, "prescient optimism", || prescient_optimism(study.as_ref().map_err(|e| e.clone())?));
    ok &= run(6, "zero battery identity", zero_battery);
    ok &= run(7, "feasibility fuzz", feasibility_fuzz);
    ok &= run(8, "tariff calibration", tariff_calibration);
    ok &= run(9, "adversarial tails", || adversarial_tails(study.as_ref().map_err(|e| e.clone())?));
    ok &= run(10, "differential evolution", de_sphere);
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
