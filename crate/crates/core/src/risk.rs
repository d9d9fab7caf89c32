//! Daily peak losses and tail-risk objectives (CVaR and month-stratified CVaR).

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::timeseries::Calendar;

const COUNT_EPS: f64 = 1e-9;

/// Per-day losses with the month each day belongs to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossArchive {
    pub losses: Vec<f64>,
    pub month_of_day: Vec<usize>,
}

impl LossArchive {
    pub fn new(losses: Vec<f64>, month_of_day: Vec<usize>) -> Result<Self> {
        if losses.len() != month_of_day.len() {
            return invalid(format!(
                "{} losses but {} month labels",
                losses.len(),
                month_of_day.len()
            ));
        }
        let a = Self { losses, month_of_day };
        let counts = a.month_counts();
        if let Some(m) = counts.iter().position(|&c| c == 0) {
            return Err(Error::Data(format!("month {m} has no days")));
        }
        Ok(a)
    }

    pub fn days(&self) -> usize {
        self.losses.len()
    }

    pub fn months(&self) -> usize {
        self.month_of_day.iter().max().map_or(0, |&m| m + 1)
    }

    fn month_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.months()];
        for &m in &self.month_of_day {
            counts[m] += 1;
        }
        counts
    }

    pub fn mean(&self) -> f64 {
        self.losses.iter().sum::<f64>() / self.losses.len() as f64
    }

    /// CSV with columns `day,month,loss`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["day", "month", "loss"])?;
        for (d, (&l, &m)) in self.losses.iter().zip(&self.month_of_day).enumerate() {
            w.write_record([d.to_string(), m.to_string(), l.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Daily maximum of the meter power trace.
pub fn daily_peaks(grid: &[f64], calendar: &Calendar) -> Result<LossArchive> {
    daily_peaks_labeled(grid, &calendar.day_of_step, &calendar.month_of_day)
}

/// [`daily_peaks`] from raw labels: `day_of_step` maps steps to days
/// `0..D`, `month_of_day` maps days to months.
pub fn daily_peaks_labeled(grid: &[f64], day_of_step: &[usize], month_of_day: &[usize]) -> Result<LossArchive> {
    if grid.len() != day_of_step.len() {
        return invalid(format!(
            "trace has {} steps but {} day labels",
            grid.len(),
            day_of_step.len()
        ));
    }
    let mut peaks = vec![f64::NEG_INFINITY; month_of_day.len()];
    for (&g, &d) in grid.iter().zip(day_of_step) {
        let slot = peaks
            .get_mut(d)
            .ok_or_else(|| Error::Data(format!("day label {d} has no month")))?;
        *slot = slot.max(g);
    }
    if let Some(d) = peaks.iter().position(|p| *p == f64::NEG_INFINITY) {
        return Err(Error::Data(format!("day {d} has no samples")));
    }
    LossArchive::new(peaks, month_of_day.to_vec())
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..1.0).contains(&alpha) {
        return invalid(format!("risk level {alpha} outside [0, 1)"));
    }
    Ok(())
}

/// Tail size `ceil((1 - alpha) * n)`.
pub fn tail_count(alpha: f64, n: usize) -> usize {
    (((1.0 - alpha) * n as f64 - COUNT_EPS).ceil().max(1.0) as usize).min(n)
}

/// Indices sorted by descending loss, ties by ascending index.
fn descending_order(losses: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..losses.len()).collect();
    idx.sort_by(|&a, &b| losses[b].total_cmp(&losses[a]).then(a.cmp(&b)));
    idx
}

/// Mean of the `ceil((1 - alpha) D)` largest losses.
pub fn cvar(losses: &[f64], alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if losses.is_empty() {
        return invalid("CVaR of an empty sample");
    }
    let k = tail_count(alpha, losses.len());
    let mut sorted = losses.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    Ok(sorted[..k].iter().sum::<f64>() / k as f64)
}

/// Minimisation form `min_y { y + E[(L - y)^+] / (1 - alpha) }` over the
/// empirical distribution.
///
/// The objective is convex and piecewise linear with kinks at the samples,
/// so it is evaluated exactly at every sample.
pub fn cvar_min_form(losses: &[f64], alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if losses.is_empty() {
        return invalid("CVaR of an empty sample");
    }
    let n = losses.len();
    let mut sorted = losses.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let scale = 1.0 / ((1.0 - alpha) * n as f64);
    let mut best = f64::INFINITY;
    let mut above = 0.0;
    for (i, &y) in sorted.iter().enumerate() {
        // sorted[..i] are >= y.
        let excess = above - i as f64 * y;
        best = best.min(y + scale * excess);
        above += y;
    }
    Ok(best)
}

/// Maximising weights of the capped-simplex form: `1/k` on each of the `k`
/// largest losses (ties resolved by day index), zero elsewhere.
pub fn risk_envelope_weights(losses: &[f64], alpha: f64) -> Result<Vec<f64>> {
    check_alpha(alpha)?;
    if losses.is_empty() {
        return invalid("CVaR of an empty sample");
    }
    let k = tail_count(alpha, losses.len());
    let mut w = vec![0.0; losses.len()];
    for &i in descending_order(losses).iter().take(k) {
        w[i] = 1.0 / k as f64;
    }
    Ok(w)
}

/// Per-month tail size `floor((1 - alpha) D / M)`.
pub fn stratum_count(alpha: f64, days: usize, months: usize) -> usize {
    ((1.0 - alpha) * days as f64 / months as f64 + COUNT_EPS).floor() as usize
}

/// Month-stratified CVaR: the mean over months of each month's mean of its
/// `k_m` largest losses.
pub fn scvar(archive: &LossArchive, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let d = archive.days();
    let m = archive.months();
    if d == 0 {
        return invalid("SCVaR of an empty archive");
    }
    let k = stratum_count(alpha, d, m);
    if k == 0 {
        let min_days = (m as f64 / (1.0 - alpha) - COUNT_EPS).ceil() as usize;
        return Err(Error::InvalidInput(format!(
            "SCVaR at level {alpha} over {m} months needs at least {min_days} days, archive has {d}"
        )));
    }
    let mut per_month: Vec<Vec<f64>> = vec![Vec::new(); m];
    for (&l, &mo) in archive.losses.iter().zip(&archive.month_of_day) {
        per_month[mo].push(l);
    }
    let total: f64 = per_month
        .iter_mut()
        .map(|v| {
            v.sort_by(|a, b| b.total_cmp(a));
            // A short partial month contributes all of its days.
            let take = k.min(v.len());
            v[..take].iter().sum::<f64>() / take as f64
        })
        .sum();
    Ok(total / m as f64)
}
