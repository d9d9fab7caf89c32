//! Size a battery with perfect foresight and with the tuned controller.

use peakshave::economics::{peak_shifted_tariff, CostModel, TariffModel};
use peakshave::optimize::DeConfig;
use peakshave::sizing::{size_prescient, size_rbc, SizingOptions};
use peakshave::timeseries::synth_fleet;

fn main() -> peakshave::Result<()> {
    let train = synth_fleet(6, 1, 90)?.remove(0);
    let tariff = peak_shifted_tariff(&TariffModel::default(), 0.07, &train)?;
    let cost = CostModel::default();
    let options = SizingOptions::default();
    let de = DeConfig {
        max_generations: 20,
        ..DeConfig::default()
    };
    for r in [
        size_prescient(&train, &tariff, &cost, &options)?,
        size_rbc(&train, &tariff, &cost, &options, &de)?,
    ] {
        println!(
            "{:9}: {:7.1} kWh {:6.1} kW, LCOE {:.5} (BaU {:.5})",
            r.method.name(),
            r.e_bat,
            r.p_bat,
            r.lcoe_sizing,
            r.bau_lcoe
        );
    }
    Ok(())
}
