//! Meter time series: ingestion, resampling, train/test splitting, calendar
//! labels and forecasting features, plus a synthetic fleet generator.

use std::collections::HashSet;
use std::io::Write;
use std::path::Path;

use chrono::{DateTime, Datelike, Duration, NaiveDate, NaiveDateTime, TimeZone, Timelike, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Pareto};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Number of hourly lags carried by a feature row.
pub const N_LAGS: usize = 24;

/// Uniformly sampled uncontrolled power profile of one meter (kW).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSeries {
    meter_id: String,
    start: DateTime<Utc>,
    step_secs: i64,
    values: Vec<f64>,
}

impl PowerSeries {
    pub fn new(
        meter_id: impl Into<String>,
        start: DateTime<Utc>,
        step_secs: i64,
        values: Vec<f64>,
    ) -> Result<Self> {
        if step_secs <= 0 {
            return invalid(format!("series step must be positive, got {step_secs} s"));
        }
        if values.is_empty() {
            return invalid("series has no values");
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite power at index {i}")));
        }
        Ok(Self {
            meter_id: meter_id.into(),
            start,
            step_secs,
            values,
        })
    }

    /// Hourly series starting at `start`.
    pub fn hourly(meter_id: impl Into<String>, start: DateTime<Utc>, values: Vec<f64>) -> Result<Self> {
        Self::new(meter_id, start, 3600, values)
    }

    pub fn meter_id(&self) -> &str {
        &self.meter_id
    }

    pub fn start(&self) -> DateTime<Utc> {
        self.start
    }

    pub fn step_secs(&self) -> i64 {
        self.step_secs
    }

    /// Δt in hours.
    pub fn dt(&self) -> f64 {
        self.step_secs as f64 / 3600.0
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn timestamp(&self, i: usize) -> DateTime<Utc> {
        self.start + Duration::seconds(self.step_secs * i as i64)
    }

    /// One past the last covered instant.
    pub fn end(&self) -> DateTime<Utc> {
        self.timestamp(self.len())
    }

    /// Uncontrolled energy Σ p_t Δt, kWh.
    pub fn energy(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.dt()
    }

    /// Number of represented days τ (may be fractional).
    pub fn days(&self) -> f64 {
        self.len() as f64 * self.dt() / 24.0
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn with_id(mut self, meter_id: impl Into<String>) -> Self {
        self.meter_id = meter_id.into();
        self
    }

    /// Contiguous sub-series `[from, to)` by index.
    pub fn slice(&self, from: usize, to: usize) -> Result<Self> {
        if from >= to || to > self.len() {
            return invalid(format!("slice {from}..{to} outside 0..{}", self.len()));
        }
        Ok(Self {
            meter_id: self.meter_id.clone(),
            start: self.timestamp(from),
            step_secs: self.step_secs,
            values: self.values[from..to].to_vec(),
        })
    }

    /// Samples whose timestamp falls in calendar year `year`.
    pub fn select_year(&self, year: i32) -> Result<Self> {
        let from = (0..self.len()).find(|&i| self.timestamp(i).year() == year);
        let Some(from) = from else {
            return Err(Error::Data(format!("series {} has no samples in {year}", self.meter_id)));
        };
        let to = (from..self.len())
            .find(|&i| self.timestamp(i).year() != year)
            .unwrap_or(self.len());
        self.slice(from, to)
    }

    /// Day and month labels for every step.
    pub fn calendar(&self) -> Calendar {
        Calendar::new(self)
    }
}

/// Day and month partition of a series' sample range.
///
/// Labels are consecutive indices starting at 0, in time order.
#[derive(Debug, Clone, PartialEq)]
pub struct Calendar {
    pub day_of_step: Vec<usize>,
    pub month_of_step: Vec<usize>,
    pub month_of_day: Vec<usize>,
    pub dates: Vec<NaiveDate>,
    pub months: Vec<(i32, u32)>,
}

impl Calendar {
    fn new(series: &PowerSeries) -> Self {
        let n = series.len();
        let mut day_of_step = Vec::with_capacity(n);
        let mut month_of_step = Vec::with_capacity(n);
        let mut month_of_day = Vec::new();
        let mut dates: Vec<NaiveDate> = Vec::new();
        let mut months: Vec<(i32, u32)> = Vec::new();
        for i in 0..n {
            let date = series.timestamp(i).date_naive();
            let month = (date.year(), date.month());
            if months.last() != Some(&month) {
                months.push(month);
            }
            if dates.last() != Some(&date) {
                dates.push(date);
                month_of_day.push(months.len() - 1);
            }
            day_of_step.push(dates.len() - 1);
            month_of_step.push(months.len() - 1);
        }
        Self {
            day_of_step,
            month_of_step,
            month_of_day,
            dates,
            months,
        }
    }

    pub fn n_days(&self) -> usize {
        self.dates.len()
    }

    pub fn n_months(&self) -> usize {
        self.months.len()
    }
}

/// Which meter columns to keep from a wide CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MeterSelection {
    #[default]
    All,
    First(usize),
    Named(Vec<String>),
}

/// Column layout and number format of a meter CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CsvSchema {
    pub delimiter: char,
    pub decimal_comma: bool,
    pub meters: MeterSelection,
    /// Values are energy per interval (kWh) and get divided by Δt.
    pub energy_per_interval: bool,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            delimiter: ',',
            decimal_comma: false,
            meters: MeterSelection::All,
            energy_per_interval: false,
        }
    }
}

impl CsvSchema {
    /// Layout of the UCI ElectricityLoadDiagrams20112014 file: `;` separated,
    /// comma decimals, kW values.
    pub fn uci() -> Self {
        Self {
            delimiter: ';',
            decimal_comma: true,
            meters: MeterSelection::All,
            energy_per_interval: false,
        }
    }
}

pub(crate) fn parse_timestamp(raw: &str) -> Option<DateTime<Utc>> {
    let raw = raw.trim();
    if let Ok(ts) = DateTime::parse_from_rfc3339(raw) {
        return Some(ts.with_timezone(&Utc));
    }
    const FORMATS: [&str; 4] = [
        "%Y-%m-%d %H:%M:%S",
        "%Y-%m-%dT%H:%M:%S",
        "%Y-%m-%d %H:%M",
        "%Y-%m-%dT%H:%M",
    ];
    FORMATS
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(raw, f).ok())
        .map(|naive| Utc.from_utc_datetime(&naive))
}

/// Read a wide meter CSV: first column timestamps, one column per meter.
pub fn ingest_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Vec<PowerSeries>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    ingest_reader(file, path, schema)
}

pub(crate) fn ingest_reader<R: std::io::Read>(
    reader: R,
    path: &Path,
    schema: &CsvSchema,
) -> Result<Vec<PowerSeries>> {
    if !schema.delimiter.is_ascii() {
        return Err(Error::Config(format!("delimiter {:?} is not ASCII", schema.delimiter)));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter as u8)
        .has_headers(true)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.len() < 2 {
        return Err(Error::Data(format!(
            "{}: need a timestamp column and at least one meter column",
            path.display()
        )));
    }
    let meter_names: Vec<String> = headers.iter().skip(1).map(|h| h.trim().to_string()).collect();
    let columns: Vec<usize> = match &schema.meters {
        MeterSelection::All => (0..meter_names.len()).collect(),
        MeterSelection::First(n) => {
            if *n == 0 || *n > meter_names.len() {
                return Err(Error::Config(format!(
                    "asked for the first {n} meters but the file has {}",
                    meter_names.len()
                )));
            }
            (0..*n).collect()
        }
        MeterSelection::Named(names) => names
            .iter()
            .map(|name| {
                meter_names
                    .iter()
                    .position(|m| m == name)
                    .ok_or_else(|| Error::Config(format!("meter column {name:?} not in file")))
            })
            .collect::<Result<_>>()?,
    };

    let mut stamps: Vec<DateTime<Utc>> = Vec::new();
    let mut data: Vec<Vec<f64>> = vec![Vec::new(); columns.len()];
    let mut record = csv::StringRecord::new();
    let mut step: Option<i64> = None;
    let row_err = |row: usize, message: String| Error::MalformedRow {
        path: path.to_path_buf(),
        row,
        message,
    };
    loop {
        let more = rdr.read_record(&mut record).map_err(|e| {
            let row = e.position().map(|p| p.line() as usize).unwrap_or(0);
            row_err(row, e.to_string())
        })?;
        if !more {
            break;
        }
        let row = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.len() != headers.len() {
            return Err(row_err(
                row,
                format!("expected {} fields, found {}", headers.len(), record.len()),
            ));
        }
        let ts = parse_timestamp(&record[0])
            .ok_or_else(|| row_err(row, format!("unparseable timestamp {:?}", &record[0])))?;
        if let Some(&prev) = stamps.last() {
            let delta = (ts - prev).num_seconds();
            if delta == 0 {
                return Err(row_err(row, format!("duplicated timestamp {}", ts.to_rfc3339())));
            }
            if delta < 0 {
                return Err(row_err(row, format!("timestamp {} goes backwards", ts.to_rfc3339())));
            }
            match step {
                None => step = Some(delta),
                Some(s) if s != delta => {
                    return Err(row_err(
                        row,
                        format!("non-uniform step: {delta} s after {} (expected {s} s)", prev.to_rfc3339()),
                    ))
                }
                _ => {}
            }
        }
        stamps.push(ts);
        for (k, &c) in columns.iter().enumerate() {
            let raw = record[c + 1].trim();
            let text = if schema.decimal_comma {
                raw.replace(',', ".")
            } else {
                raw.to_string()
            };
            let v: f64 = text.parse().map_err(|_| {
                row_err(row, format!("column {:?}: non-numeric value {raw:?}", meter_names[c]))
            })?;
            if !v.is_finite() {
                return Err(row_err(row, format!("column {:?}: non-finite value", meter_names[c])));
            }
            data[k].push(v);
        }
    }
    if stamps.is_empty() {
        return Err(Error::Data(format!("{}: no data rows", path.display())));
    }
    // A single row carries no step information; assume hourly.
    let step_secs = step.unwrap_or(3600);
    let dt = step_secs as f64 / 3600.0;
    columns
        .iter()
        .zip(data)
        .map(|(&c, mut values)| {
            if schema.energy_per_interval {
                values.iter_mut().for_each(|v| *v /= dt);
            }
            PowerSeries::new(meter_names[c].clone(), stamps[0], step_secs, values)
        })
        .collect()
}

/// Write aligned series as canonical CSV: RFC 3339 UTC timestamps, dot decimals.
pub fn write_canonical_csv<W: Write>(series: &[PowerSeries], out: W) -> Result<()> {
    let Some(first) = series.first() else {
        return invalid("nothing to write");
    };
    if series
        .iter()
        .any(|s| s.start != first.start || s.step_secs != first.step_secs || s.len() != first.len())
    {
        return invalid("series are not aligned");
    }
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["timestamp".to_string()];
    header.extend(series.iter().map(|s| s.meter_id.clone()));
    w.write_record(&header)?;
    for i in 0..first.len() {
        let mut row = vec![first.timestamp(i).format("%Y-%m-%dT%H:%M:%SZ").to_string()];
        row.extend(series.iter().map(|s| format!("{}", s.values[i])));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Average-power downsampling to `target_step_secs`; a trailing partial block is dropped.
pub fn resample(series: &PowerSeries, target_step_secs: i64) -> Result<PowerSeries> {
    if target_step_secs <= 0 || target_step_secs % series.step_secs != 0 {
        return invalid(format!(
            "target step {target_step_secs} s is not an integer multiple of {} s",
            series.step_secs
        ));
    }
    let ratio = (target_step_secs / series.step_secs) as usize;
    let values: Vec<f64> = series
        .values
        .chunks_exact(ratio)
        .map(|block| block.iter().sum::<f64>() / ratio as f64)
        .collect();
    if values.is_empty() {
        return invalid(format!(
            "series of {} samples is shorter than one {target_step_secs} s block",
            series.len()
        ));
    }
    PowerSeries::new(series.meter_id.clone(), series.start, target_step_secs, values)
}

/// How to cut a series into a training prefix and a test suffix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitSpec {
    /// Fraction of samples in the training part, in (0, 1).
    Fraction(f64),
    /// First test timestamp.
    Boundary(DateTime<Utc>),
    /// Training part covers this many calendar months from the series start.
    FirstMonths(u32),
}

/// Split into disjoint contiguous (train, test) parts.
pub fn split(series: &PowerSeries, spec: SplitSpec) -> Result<(PowerSeries, PowerSeries)> {
    let n = series.len();
    let cut = match spec {
        SplitSpec::Fraction(f) => {
            if !(f > 0.0 && f < 1.0) {
                return invalid(format!("train fraction {f} outside (0, 1)"));
            }
            (f * n as f64).floor() as usize
        }
        SplitSpec::Boundary(ts) => boundary_index(series, ts)?,
        SplitSpec::FirstMonths(m) => {
            let start = series.start.date_naive();
            let first = NaiveDate::from_ymd_opt(start.year(), start.month(), 1)
                .expect("first of month exists");
            let boundary = first
                .checked_add_months(chrono::Months::new(m))
                .ok_or_else(|| Error::InvalidInput(format!("cannot add {m} months")))?;
            let ts = Utc.from_utc_datetime(&boundary.and_hms_opt(0, 0, 0).expect("midnight"));
            boundary_index(series, ts)?
        }
    };
    if cut == 0 || cut >= n {
        return invalid(format!("split at index {cut} leaves an empty part (n = {n})"));
    }
    Ok((series.slice(0, cut)?, series.slice(cut, n)?))
}

fn boundary_index(series: &PowerSeries, ts: DateTime<Utc>) -> Result<usize> {
    if ts <= series.start || ts >= series.end() {
        return invalid(format!(
            "split boundary {} outside ({}, {})",
            ts.to_rfc3339(),
            series.start.to_rfc3339(),
            series.end().to_rfc3339()
        ));
    }
    let secs = (ts - series.start).num_seconds();
    Ok(((secs + series.step_secs - 1) / series.step_secs) as usize)
}

/// Forecasting features at origin step `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub t: usize,
    pub hour: u32,
    pub weekday: u32,
    /// `lags[0] = p[t-1]`, `lags[23] = p[t-24]`.
    pub lags: [f64; N_LAGS],
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalendarFeatures {
    pub rows: Vec<FeatureRow>,
}

/// Calendar fields of a timestamp: (hour of day, weekday with Monday = 0).
pub fn calendar_of(ts: DateTime<Utc>) -> (u32, u32) {
    (ts.hour(), ts.weekday().num_days_from_monday())
}

/// One feature row per step `t >= 24`.
pub fn make_features(series: &PowerSeries) -> Result<CalendarFeatures> {
    if series.len() <= N_LAGS {
        return invalid(format!(
            "need more than {N_LAGS} samples for lag features, got {}",
            series.len()
        ));
    }
    let v = &series.values;
    let rows = (N_LAGS..series.len())
        .map(|t| {
            let (hour, weekday) = calendar_of(series.timestamp(t));
            let mut lags = [0.0; N_LAGS];
            for (k, lag) in lags.iter_mut().enumerate() {
                *lag = v[t - 1 - k];
            }
            FeatureRow {
                t,
                hour,
                weekday,
                lags,
            }
        })
        .collect();
    Ok(CalendarFeatures { rows })
}

/// Parameters of the synthetic load generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub base_kw: f64,
    pub daily_amplitude_kw: f64,
    pub weekend_factor: f64,
    pub seasonal_amplitude: f64,
    /// Share of hours covered by peak events.
    pub event_share: f64,
    /// Pareto tail index of the event magnitudes.
    pub event_tail: f64,
    /// Pareto scale of the event magnitudes, as a fraction of the meter's base load.
    pub event_scale: f64,
    pub noise_kw: f64,
    pub start: DateTime<Utc>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            base_kw: 50.0,
            daily_amplitude_kw: 30.0,
            weekend_factor: 0.75,
            seasonal_amplitude: 0.2,
            event_share: 0.02,
            event_tail: 2.5,
            event_scale: 0.4,
            noise_kw: 3.0,
            start: Utc.with_ymd_and_hms(2023, 1, 1, 0, 0, 0).unwrap(),
        }
    }
}

/// Deterministic synthetic hourly fleet with the default generator parameters.
pub fn synth_fleet(seed: u64, n_meters: usize, days: usize) -> Result<Vec<PowerSeries>> {
    synth_fleet_with(&SynthConfig::default(), seed, n_meters, days)
}

pub fn synth_fleet_with(
    cfg: &SynthConfig,
    seed: u64,
    n_meters: usize,
    days: usize,
) -> Result<Vec<PowerSeries>> {
    if n_meters == 0 {
        return invalid("n_meters must be at least 1");
    }
    if days < 60 {
        return invalid(format!("need at least 60 days for monthly statistics, got {days}"));
    }
    (0..n_meters)
        .map(|m| synth_meter(cfg, seed, m, days))
        .collect()
}

fn synth_meter(cfg: &SynthConfig, seed: u64, meter: usize, days: usize) -> Result<PowerSeries> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(meter as u64 + 1);
    let scale: f64 = rng.gen_range(0.5..2.0);
    let base = cfg.base_kw * scale;
    let amplitude = cfg.daily_amplitude_kw * scale * rng.gen_range(0.6..1.4);
    let peak_hour: f64 = rng.gen_range(10.0..17.0);
    let width: f64 = rng.gen_range(3.0..6.0);
    let noise = Normal::new(0.0, cfg.noise_kw * scale).expect("finite sigma");
    let events = Pareto::new(cfg.event_scale * base, cfg.event_tail).expect("positive Pareto parameters");
    let floor = 0.05 * base;
    let n = days * 24;
    let start_doy = cfg.start.ordinal0() as f64;
    let mut values = Vec::with_capacity(n);
    let mut ar = 0.0;
    let mut event_left = 0usize;
    let mut event_kw = 0.0;
    for t in 0..n {
        let ts = cfg.start + Duration::hours(t as i64);
        let (hour, weekday) = calendar_of(ts);
        let doy = start_doy + t as f64 / 24.0;
        let season = 1.0 + cfg.seasonal_amplitude * (2.0 * std::f64::consts::PI * doy / 365.0).cos();
        let weekly = if weekday >= 5 { cfg.weekend_factor } else { 1.0 };
        let dh = hour as f64 - peak_hour;
        let daily = (-0.5 * (dh / width).powi(2)).exp();
        ar = 0.8 * ar + noise.sample(&mut rng);
        if event_left == 0 && rng.gen::<f64>() < cfg.event_share / 2.0 {
            event_left = rng.gen_range(1..=3);
            event_kw = events.sample(&mut rng);
        }
        let event = if event_left > 0 {
            event_left -= 1;
            event_kw
        } else {
            0.0
        };
        let p = (base * season + amplitude * daily) * weekly + ar + event;
        values.push(p.max(floor));
    }
    PowerSeries::hourly(format!("SYN_{:03}", meter + 1), cfg.start, values)
}

/// Distinct meter ids, preserving order; errors on duplicates.
pub fn check_unique_ids(series: &[PowerSeries]) -> Result<()> {
    let mut seen = HashSet::new();
    for s in series {
        if !seen.insert(s.meter_id()) {
            return Err(Error::Data(format!("duplicate meter id {}", s.meter_id())));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t0() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2011, 1, 1, 0, 0, 0).unwrap()
    }

    fn ingest_str(text: &str, schema: &CsvSchema) -> Result<Vec<PowerSeries>> {
        ingest_reader(text.as_bytes(), Path::new("mem.csv"), schema)
    }

    #[test]
    fn ingest_quarter_hour() {
        let csv = "time,MT_001\n2011-01-01 00:15:00,1\n2011-01-01 00:30:00,2\n2011-01-01 00:45:00,3\n2011-01-01 01:00:00,4\n";
        let s = ingest_str(csv, &CsvSchema::default()).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].values(), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s[0].dt(), 0.25);
    }

    #[test]
    fn ingest_uci_layout_selects_first_meters() {
        let csv = "\"\";\"MT_001\";\"MT_002\";\"MT_003\"\n2011-01-01 00:15:00;1,5;2;3\n2011-01-01 00:30:00;2,5;2;3\n";
        let schema = CsvSchema {
            meters: MeterSelection::First(2),
            ..CsvSchema::uci()
        };
        let s = ingest_str(csv, &schema).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].meter_id(), "MT_001");
        assert_eq!(s[0].values(), &[1.5, 2.5]);
    }

    #[test]
    fn ingest_rejects_duplicate_timestamp() {
        let csv = "t,a\n2011-01-01T00:00:00Z,1\n2011-01-01T01:00:00Z,2\n2011-01-01T01:00:00Z,3\n";
        let err = ingest_str(csv, &CsvSchema::default()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("duplicated timestamp 2011-01-01T01:00:00"), "{msg}");
        assert!(msg.contains("row 4"), "{msg}");
    }

    #[test]
    fn ingest_rejects_gaps_and_garbage() {
        let gap = "t,a\n2011-01-01T00:00:00Z,1\n2011-01-01T01:00:00Z,2\n2011-01-01T03:00:00Z,3\n";
        assert!(ingest_str(gap, &CsvSchema::default())
            .unwrap_err()
            .to_string()
            .contains("non-uniform"));
        let bad = "t,a\n2011-01-01T00:00:00Z,1\n2011-01-01T01:00:00Z,x\n";
        let err = ingest_str(bad, &CsvSchema::default()).unwrap_err();
        assert!(matches!(err, Error::MalformedRow { row: 3, .. }), "{err}");
        let empty = "t,a\n2011-01-01T00:00:00Z,1\n2011-01-01T01:00:00Z,\n";
        assert!(ingest_str(empty, &CsvSchema::default()).is_err());
    }

    #[test]
    fn energy_per_interval_converts_to_power() {
        let csv = "t,a\n2011-01-01 00:15:00,1\n2011-01-01 00:30:00,2\n";
        let schema = CsvSchema {
            energy_per_interval: true,
            ..CsvSchema::default()
        };
        assert_eq!(ingest_str(csv, &schema).unwrap()[0].values(), &[4.0, 8.0]);
    }

    #[test]
    fn resample_mean() {
        let s = PowerSeries::new("m", t0(), 900, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let h = resample(&s, 3600).unwrap();
        assert_eq!(h.values(), &[2.5]);
        assert_eq!(h.step_secs(), 3600);
        assert_eq!(resample(&s, 900).unwrap(), s);
        assert!(resample(&s, 1000).is_err());
    }

    #[test]
    fn resample_length_floor() {
        let s = PowerSeries::new("m", t0(), 900, vec![1.0; 8764]).unwrap();
        assert_eq!(resample(&s, 3600).unwrap().len(), 8764 / 4);
        let s = PowerSeries::new("m", t0(), 900, vec![1.0; 8766]).unwrap();
        assert_eq!(resample(&s, 3600).unwrap().len(), 2191);
    }

    #[test]
    fn split_fraction_and_months() {
        let s = PowerSeries::hourly("m", t0(), (0..100).map(f64::from).collect()).unwrap();
        let (a, b) = split(&s, SplitSpec::Fraction(0.5)).unwrap();
        assert_eq!((a.len(), b.len()), (50, 50));
        assert!(split(&s, SplitSpec::Fraction(1.0)).is_err());

        // Jan..Jun 2011 = 31+28+31+30+31+30 = 181 days.
        let year = PowerSeries::hourly("m", t0(), vec![1.0; 8760]).unwrap();
        let (a, b) = split(&year, SplitSpec::FirstMonths(6)).unwrap();
        assert_eq!((a.len(), b.len()), (181 * 24, 184 * 24));
        assert_eq!((a.len(), b.len()), (4344, 4416));
        let july = Utc.with_ymd_and_hms(2011, 7, 1, 0, 0, 0).unwrap();
        let (c, _) = split(&year, SplitSpec::Boundary(july)).unwrap();
        assert_eq!(c.len(), 4344);
        assert_eq!(b.start(), july);
        let late = Utc.with_ymd_and_hms(2013, 1, 1, 0, 0, 0).unwrap();
        assert!(split(&year, SplitSpec::Boundary(late)).is_err());
    }

    #[test]
    fn features() {
        let s = PowerSeries::hourly("m", t0(), (0..30).map(f64::from).collect()).unwrap();
        let f = make_features(&s).unwrap();
        assert_eq!(f.rows.len(), 6);
        let expect: Vec<f64> = (0..24).rev().map(f64::from).collect();
        assert_eq!(f.rows[0].lags.to_vec(), expect);
        assert_eq!(f.rows[2].t, 26);
        assert_eq!(f.rows[2].hour, 2);
        // 2011-01-01 is a Saturday.
        assert_eq!(f.rows[0].weekday, 6);

        let c = PowerSeries::hourly("m", t0(), vec![5.0; 40]).unwrap();
        assert!(make_features(&c).unwrap().rows.iter().all(|r| r.lags.iter().all(|&v| v == 5.0)));
        let short = PowerSeries::hourly("m", t0(), vec![5.0; 24]).unwrap();
        assert!(make_features(&short).is_err());
    }

    #[test]
    fn calendar_partitions() {
        let s = PowerSeries::hourly("m", t0(), vec![1.0; 24 * 40]).unwrap();
        let cal = s.calendar();
        assert_eq!(cal.n_days(), 40);
        assert_eq!(cal.n_months(), 2);
        assert_eq!(cal.month_of_day.iter().filter(|&&m| m == 0).count(), 31);
        assert_eq!(cal.day_of_step[24 * 31], 31);
    }

    #[test]
    fn synth_is_deterministic_and_positive() {
        let a = synth_fleet(1, 2, 60).unwrap();
        let b = synth_fleet(1, 2, 60).unwrap();
        assert_eq!(a, b);
        assert_ne!(a[0].values(), a[1].values());
        assert!(synth_fleet(1, 0, 60).is_err());
        assert!(synth_fleet(1, 1, 59).is_err());
        let year = synth_fleet(1, 1, 365).unwrap();
        assert_eq!(year[0].len(), 8760);
        assert!(year[0].values().iter().all(|&v| v > 0.0));
    }

    #[test]
    fn canonical_csv_round_trip() {
        let fleet = synth_fleet(3, 2, 60).unwrap();
        let mut buf = Vec::new();
        write_canonical_csv(&fleet, &mut buf).unwrap();
        let back = ingest_reader(buf.as_slice(), Path::new("x"), &CsvSchema::default()).unwrap();
        assert_eq!(back, fleet);
    }
}
