//! Calibrate a revenue-neutral peak-oriented tariff and price a battery.

use peakshave::economics::{bau_lcoe, evaluate_costs, peak_shifted_tariff, CostModel, TariffModel};
use peakshave::timeseries::synth_fleet;

fn main() -> peakshave::Result<()> {
    let series = synth_fleet(5, 1, 180)?.remove(0);
    let base = TariffModel::default();
    let tariff = peak_shifted_tariff(&base, 0.07, &series)?;
    println!(
        "import {:.0} USD/MWh, peak {:.0} USD/MW/month",
        tariff.import * 1000.0,
        tariff.peak * 1000.0
    );
    let cost = CostModel::default();
    println!("BaU LCOE {:.4} USD/kWh", bau_lcoe(&series, &tariff, &cost)?);
    // A battery that flattens nothing still costs money.
    let idle = evaluate_costs(&series, series.values(), 100.0, 30.0, &tariff, &cost)?;
    println!("idle 100 kWh / 30 kW battery: LCOE {:.4} USD/kWh", idle.lcoe);
    Ok(())
}
