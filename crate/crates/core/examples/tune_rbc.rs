//! Tune the controller thresholds with differential evolution, once for the
//! mean daily peak and once for the stratified tail.

use peakshave::battery::BatterySpec;
use peakshave::optimize::{tune_rbc, DeConfig, TuneObjective};
use peakshave::timeseries::synth_fleet;

fn main() -> peakshave::Result<()> {
    let train = synth_fleet(2, 1, 120)?.remove(0);
    let spec = BatterySpec::full_window(250.0, 70.0, 0.95, 0.95)?;
    let de = DeConfig {
        max_generations: 30,
        seed: 1,
        ..DeConfig::default()
    };
    for kind in [TuneObjective::MeanDailyPeak, TuneObjective::Scvar { alpha: 0.95 }] {
        let r = tune_rbc(&train, &spec, kind, &de)?;
        println!(
            "{kind:?}: window {} upper {:.3} lower {:.3} -> {:.2} kW ({} evaluations)",
            r.params.window, r.params.upper, r.params.lower, r.objective, r.evaluations
        );
    }
    Ok(())
}
