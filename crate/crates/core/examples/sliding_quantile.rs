//! Rolling quartiles of a load profile over a one-day window.

use peakshave::quantile::SlidingQuantile;
use peakshave::timeseries::synth_fleet;

fn main() -> peakshave::Result<()> {
    let series = synth_fleet(1, 1, 60)?.remove(0);
    let mut window = SlidingQuantile::new(24)?;
    for (t, &p) in series.values().iter().enumerate().take(24 * 5) {
        window.push(p)?;
        if t % 24 == 23 {
            println!(
                "day {}: q25 {:.1}  median {:.1}  q75 {:.1}  max {:.1}",
                t / 24,
                window.quantile(0.25)?,
                window.quantile(0.5)?,
                window.quantile(0.75)?,
                window.quantile(1.0)?
            );
        }
    }
    Ok(())
}
