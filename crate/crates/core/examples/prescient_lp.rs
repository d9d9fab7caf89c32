//! Dispatch with perfect foresight: a fixed battery on three days solved
//! with both LP backends, then joint sizing over two months.

use peakshave::economics::{CostModel, TariffModel};
use peakshave::lp::{build_prescient_lp, solve_dense, solve_first_order, PdhgOptions, PrescientBattery};
use peakshave::timeseries::synth_fleet;

fn main() -> peakshave::Result<()> {
    let series = synth_fleet(4, 1, 60)?.remove(0);
    let tariff = TariffModel {
        import: 0.165,
        export: 0.0,
        peak: 20.0,
    };
    let cost = CostModel::default();
    let battery = PrescientBattery::from_train(&series, 0.95, 0.95);

    let short = series.slice(0, 24 * 3)?;
    let lp = build_prescient_lp(&short, &tariff, &cost, &battery, Some((100.0, 30.0)))?;
    println!("three days, 100 kWh / 30 kW: {} variables", lp.problem.n_vars());
    let dense = solve_dense(&lp.problem, 1e-9)?;
    let pdhg = solve_first_order(&lp.problem, &PdhgOptions::default())?;
    for (name, sol) in [("simplex", &dense), ("pdhg", &pdhg)] {
        let peak = sol.x[lp.layout.peak(0)];
        println!(
            "  {name:8} {:?} LCOE {:.8} peak {peak:.2} kW ({} iterations)",
            sol.status,
            sol.objective + lp.fixed_term,
            sol.iterations
        );
    }

    let lp = build_prescient_lp(&series, &tariff, &cost, &battery, None)?;
    let sol = solve_first_order(&lp.problem, &PdhgOptions::default())?;
    println!(
        "two months, free size: {:?} E {:.1} kWh P {:.1} kW, LCOE {:.5} ({} iterations)",
        sol.status,
        sol.x[lp.layout.e_bat()],
        sol.x[lp.layout.p_bat()],
        sol.objective + lp.fixed_term,
        sol.iterations
    );
    Ok(())
}
