//! Generate a synthetic fleet, resample it to two-hourly averages, split it
//! and print the canonical CSV head of one meter.

use peakshave::timeseries::{resample, split, synth_fleet, write_canonical_csv, SplitSpec};

fn main() -> peakshave::Result<()> {
    let fleet = synth_fleet(7, 3, 120)?;
    for s in &fleet {
        let coarse = resample(s, 7200)?;
        let (train, test) = split(s, SplitSpec::FirstMonths(2))?;
        println!(
            "{}: {} h, peak {:.1} kW, {} two-hour blocks, train {} h / test {} h",
            s.meter_id(),
            s.len(),
            s.max(),
            coarse.len(),
            train.len(),
            test.len()
        );
    }
    let head = fleet[0].slice(0, 4)?;
    write_canonical_csv(&[head], std::io::stdout())
}
