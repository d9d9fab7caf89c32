//! A small end-to-end study: two meters, both sizing methods, all four
//! controllers, outputs written to a temporary directory.

use peakshave::evaluate::{lcoe_report, run_study, write_outputs, Controller, StudyConfig};
use peakshave::optimize::DeConfig;
use peakshave::timeseries::{split, synth_fleet, SplitSpec};

fn main() -> peakshave::Result<()> {
    let pairs = synth_fleet(3, 2, 120)?
        .iter()
        .map(|s| split(s, SplitSpec::FirstMonths(3)))
        .collect::<peakshave::Result<Vec<_>>>()?;
    let config = StudyConfig {
        de: DeConfig {
            max_generations: 10,
            ..DeConfig::default()
        },
        controllers: vec![Controller::Rbc, Controller::RbcAdv, Controller::MpcPrescient],
        ..StudyConfig::default()
    };
    let study = run_study(&pairs, &config, None)?;
    for t in &study.quantiles {
        println!("{} / {}: pooled q95 {:.3}", t.sizing.name(), t.controller, t.pooled[5]);
    }
    for row in lcoe_report(&study)? {
        println!(
            "{} {} {}: LCOE/BaU {:.3}{}",
            row.meter,
            row.sizing.name(),
            row.controller,
            row.lcoe_normalized,
            if row.not_profitable { " (not profitable)" } else { "" }
        );
    }
    let dir = std::env::temp_dir().join("peakshave-fleet-study");
    write_outputs(&study, &dir)?;
    println!("outputs in {}", dir.display());
    Ok(())
}
