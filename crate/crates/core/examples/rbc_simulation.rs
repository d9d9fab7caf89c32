//! Run the rule-based controller on one meter and compare monthly peaks
//! with and without the battery.

use peakshave::battery::{simulate, BatterySpec};
use peakshave::economics::opex;
use peakshave::economics::TariffModel;
use peakshave::policies::{make_rbc, RbcParams};
use peakshave::timeseries::synth_fleet;

fn main() -> peakshave::Result<()> {
    let series = synth_fleet(3, 1, 180)?.remove(0);
    let spec = BatterySpec::full_window(200.0, 60.0, 0.95, 0.95)?;
    let mut rbc = make_rbc(RbcParams::new(168, 0.9, 0.2)?)?;
    let sim = simulate(&series, &spec, &mut rbc)?;
    println!(
        "energy balance residual {:.2e} kWh, bound violation {:.2e}",
        sim.energy_balance_residual(&spec, series.dt()),
        sim.bound_violation(&spec)
    );
    let cal = series.calendar();
    let tariff = TariffModel::default();
    let before = opex(series.values(), series.dt(), &cal.month_of_step, &tariff)?;
    let after = opex(&sim.grid, series.dt(), &cal.month_of_step, &tariff)?;
    for (m, (a, b)) in before.monthly_peaks.iter().zip(&after.monthly_peaks).enumerate() {
        println!("month {m}: peak {a:.1} kW -> {b:.1} kW");
    }
    Ok(())
}
