//! Receding-horizon control with a fitted forecaster against its prescient
//! counterpart.

use peakshave::battery::{simulate, BatterySpec};
use peakshave::mpc::{fit_forecaster, make_mpc, ForecasterConfig, MpcConfig, MpcSource};
use peakshave::timeseries::{split, synth_fleet, SplitSpec};

fn main() -> peakshave::Result<()> {
    let series = synth_fleet(9, 1, 90)?.remove(0);
    let (train, test) = split(&series, SplitSpec::FirstMonths(2))?;
    let test = test.slice(0, 24 * 14)?;
    let model = fit_forecaster(&train, &ForecasterConfig::default())?;
    println!("test nMAE {:.3}", model.normalized_mae(&test)?);
    let spec = BatterySpec::full_window(150.0, 40.0, 0.95, 0.95)?;
    let sources = [
        (
            "forecast",
            MpcSource::Forecast {
                model,
                start: test.start(),
                step_secs: test.step_secs(),
                history: Vec::new(),
            },
        ),
        ("prescient", MpcSource::Prescient(test.values().to_vec())),
    ];
    for (name, source) in sources {
        let mut mpc = make_mpc(source, MpcConfig::default())?;
        let sim = simulate(&test, &spec, &mut mpc)?;
        let peak = sim.grid.iter().copied().fold(f64::MIN, f64::max);
        println!("{name:9} peak {peak:.1} kW (uncontrolled {:.1}), solves {:?}", test.max(), mpc.solve_stats());
    }
    Ok(())
}
