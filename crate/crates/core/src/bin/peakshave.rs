use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use peakshave::battery::BatterySpec;
use peakshave::bench::run_bench;
use peakshave::config::{load_series, read_dataset, read_manifest, write_dataset, RunConfig};
use peakshave::error::{Error, Result};
use peakshave::evaluate::{calibrated_tariff, run_study, write_outputs, Controller, TariffCalibration};
use peakshave::optimize::{tune_rbc, TuneObjective};
use peakshave::sizing::{size_prescient, size_rbc, SizingMethod};
use peakshave::timeseries::PowerSeries;

/// Battery sizing and peak-shaving control studies on metered load data.
#[derive(Parser)]
#[command(name = "peakshave", version)]
struct Cli {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for meter-level parallelism (0 = all cores).
    #[arg(long, short, global = true, default_value_t = 0)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load, resample and split the data; write per-meter files and a manifest.
    Ingest,
    /// Run the sizing x controller matrix over all meters.
    Study {
        /// Restrict to these controllers.
        #[arg(long, value_delimiter = ',')]
        controllers: Vec<Controller>,
        /// Restrict to these sizing methods.
        #[arg(long, value_delimiter = ',', value_enum)]
        sizing: Vec<MethodArg>,
        /// Ignore stored per-meter results.
        #[arg(long)]
        fresh: bool,
    },
    /// Time the RBC simulation loop and one MPC solve.
    Bench {
        #[arg(long, default_value_t = 8760)]
        steps: usize,
        #[arg(long, default_value_t = 168)]
        window: usize,
        #[arg(long, default_value_t = 200)]
        reps: usize,
        /// Report path; defaults to <output>/bench.json.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tune the RBC thresholds for one meter and battery size.
    Tune {
        #[arg(long)]
        meter: String,
        #[arg(long, value_enum, default_value_t = ObjectiveArg::Scvar)]
        objective: ObjectiveArg,
        /// Battery energy, kWh; prescient sizing is used when omitted.
        #[arg(long, requires = "p_bat")]
        e_bat: Option<f64>,
        /// Battery power, kW.
        #[arg(long, requires = "e_bat")]
        p_bat: Option<f64>,
    },
    /// Size the battery of one meter.
    Size {
        #[arg(long)]
        meter: String,
        #[arg(long, value_enum, default_value_t = MethodArg::Prescient)]
        method: MethodArg,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Prescient,
    Rbc,
}

impl From<MethodArg> for SizingMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Prescient => SizingMethod::Prescient,
            MethodArg::Rbc => SizingMethod::Rbc,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    Mean,
    Scvar,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build_global()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    match cli.command {
        Command::Ingest => ingest(&cfg).map(|_| ()),
        Command::Study {
            controllers,
            sizing,
            fresh,
        } => study(&cfg, controllers, sizing, fresh),
        Command::Bench {
            steps,
            window,
            reps,
            out,
        } => {
            if reps < 100 {
                return Err(Error::Config(format!("bench needs at least 100 repetitions, got {reps}")));
            }
            let report = run_bench(steps, window, reps)?;
            println!(
                "cpu: {}\nrbc {} steps, window {}: {:.1} ± {:.1} µs (min {:.1}, {} reps)\nmpc step, horizon {}: {:.1} ± {:.1} µs",
                report.cpu,
                report.steps,
                report.window,
                report.rbc_simulation.mean_us,
                report.rbc_simulation.std_us,
                report.rbc_simulation.min_us,
                report.rbc_simulation.reps,
                report.mpc_horizon,
                report.mpc_step.mean_us,
                report.mpc_step.std_us,
            );
            write_json(&out.unwrap_or_else(|| cfg.output.join("bench.json")), &report)
        }
        Command::Tune {
            meter,
            objective,
            e_bat,
            p_bat,
        } => tune(&cfg, &meter, objective, e_bat.zip(p_bat)),
        Command::Size { meter, method } => size(&cfg, &meter, method.into()),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, serde_json::to_string_pretty(value)?)?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn ingest(cfg: &RunConfig) -> Result<Vec<(PowerSeries, PowerSeries)>> {
    let series = load_series(&cfg.data, cfg.seed)?;
    let dir = cfg.data_dir();
    let manifest = write_dataset(&series, cfg.data.split, &dir)?;
    log::info!("{} meters written to {}", manifest.meters.len(), dir.display());
    read_dataset(&dir, &manifest)
}

fn dataset(cfg: &RunConfig) -> Result<Vec<(PowerSeries, PowerSeries)>> {
    let dir = cfg.data_dir();
    match read_manifest(&dir) {
        Ok(m) => read_dataset(&dir, &m),
        Err(_) => {
            log::info!("no manifest in {}, ingesting first", dir.display());
            ingest(cfg)
        }
    }
}

fn study(cfg: &RunConfig, controllers: Vec<Controller>, sizing: Vec<MethodArg>, fresh: bool) -> Result<()> {
    let mut study = cfg.study();
    if !controllers.is_empty() {
        study.controllers = controllers;
    }
    if !sizing.is_empty() {
        study.sizings = sizing.into_iter().map(SizingMethod::from).collect();
    }
    let pairs = dataset(cfg)?;
    let cache = cfg.cache_dir();
    if fresh && cache.exists() {
        fs::remove_dir_all(&cache)?;
    }
    let result = run_study(&pairs, &study, Some(&cache))?;
    write_outputs(&result, &cfg.output)?;
    println!(
        "{} meters evaluated, {} failed; outputs in {}",
        result.meters.len(),
        result.failures.len(),
        cfg.output.display()
    );
    for f in &result.failures {
        println!("  {}: {}", f.meter, f.error);
    }
    match result.failures.first() {
        Some(f) if result.meters.is_empty() => Err(Error::Data(format!("every meter failed; first: {}", f.error))),
        _ => Ok(()),
    }
}

/// Training split of one meter and the tariff it is billed under.
fn meter_train(cfg: &RunConfig, meter: &str) -> Result<(PowerSeries, peakshave::economics::TariffModel)> {
    let pairs = dataset(cfg)?;
    let study = cfg.study();
    let trains: Vec<PowerSeries> = pairs.iter().map(|(t, _)| t.clone()).collect();
    let train = trains
        .iter()
        .find(|t| t.meter_id() == meter)
        .cloned()
        .ok_or_else(|| Error::Config(format!("meter {meter} not in the dataset")))?;
    let tariff = match study.calibration {
        TariffCalibration::Fleet => calibrated_tariff(&study, &trains)?,
        _ => calibrated_tariff(&study, std::slice::from_ref(&train))?,
    };
    Ok((train, tariff))
}

fn tune(cfg: &RunConfig, meter: &str, objective: ObjectiveArg, size: Option<(f64, f64)>) -> Result<()> {
    let (train, tariff) = meter_train(cfg, meter)?;
    let study = cfg.study();
    let (e, p) = match size {
        Some(s) => s,
        None => {
            let s = size_prescient(&train, &tariff, &study.cost, &study.sizing)?;
            log::info!("prescient size: {:.2} kWh, {:.2} kW", s.e_bat, s.p_bat);
            (s.e_bat, s.p_bat)
        }
    };
    let spec = BatterySpec::full_window(e, p, study.sizing.eta_ch, study.sizing.eta_ds)?;
    let kind = match objective {
        ObjectiveArg::Mean => TuneObjective::MeanDailyPeak,
        ObjectiveArg::Scvar => TuneObjective::Scvar { alpha: study.alpha },
    };
    let result = tune_rbc(&train, &spec, kind, &study.de)?;
    println!(
        "{meter}: window {} upper {:.4} lower {:.4}, objective {:.4} ({} evaluations)",
        result.params.window, result.params.upper, result.params.lower, result.objective, result.evaluations
    );
    write_json(&cfg.output.join(format!("tune_{}.json", peakshave::evaluate::sanitize(meter))), &result)
}

fn size(cfg: &RunConfig, meter: &str, method: SizingMethod) -> Result<()> {
    let (train, tariff) = meter_train(cfg, meter)?;
    let study = cfg.study();
    let result = match method {
        SizingMethod::Prescient => size_prescient(&train, &tariff, &study.cost, &study.sizing)?,
        SizingMethod::Rbc => size_rbc(&train, &tariff, &study.cost, &study.sizing, &study.de)?,
    };
    println!(
        "{meter} ({}): {:.2} kWh, {:.2} kW, sizing LCOE {:.5} USD/kWh (BaU {:.5})",
        method.name(),
        result.e_bat,
        result.p_bat,
        result.lcoe_sizing,
        result.bau_lcoe
    );
    write_json(
        &cfg.output.join(format!("size_{}_{}.json", method.name(), peakshave::evaluate::sanitize(meter))),
        &result,
    )
}
