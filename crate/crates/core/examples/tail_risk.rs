//! Daily-peak tail statistics: CVaR in its three forms and the
//! month-stratified variant.

use peakshave::risk::{cvar, cvar_min_form, daily_peaks, risk_envelope_weights, scvar};
use peakshave::timeseries::synth_fleet;

fn main() -> peakshave::Result<()> {
    let series = synth_fleet(11, 1, 182)?.remove(0);
    let archive = daily_peaks(series.values(), &series.calendar())?;
    let alpha = 0.95;
    let w = risk_envelope_weights(&archive.losses, alpha)?;
    let dual: f64 = w.iter().zip(&archive.losses).map(|(w, l)| w * l).sum();
    println!("{} days over {} months", archive.days(), archive.months());
    println!("mean daily peak  {:.3} kW", archive.mean());
    println!("CVaR top-k mean  {:.6}", cvar(&archive.losses, alpha)?);
    println!("CVaR min form    {:.6}", cvar_min_form(&archive.losses, alpha)?);
    println!("CVaR envelope    {dual:.6}");
    println!("SCVaR            {:.6}", scvar(&archive, alpha)?);
    Ok(())
}
