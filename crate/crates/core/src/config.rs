//! Run configuration read from TOML, plus dataset preparation into a
//! checksummed manifest of per-meter train/test files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::economics::{CostModel, TariffModel};
use crate::error::{Error, Result};
use crate::evaluate::{Controller, StudyConfig, TariffCalibration, DEFAULT_LEVELS};
use crate::mpc::{ForecasterConfig, MpcConfig};
use crate::optimize::DeConfig;
use crate::sizing::{SizingMethod, SizingOptions};
use crate::timeseries::{
    check_unique_ids, ingest_csv, resample, split, synth_fleet_with, write_canonical_csv, CsvSchema, MeterSelection,
    PowerSeries, SplitSpec, SynthConfig,
};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Where the load data comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// Wide CSV, one column per meter.
    Csv {
        path: PathBuf,
        #[serde(default = "uci_first_100")]
        schema: CsvSchema,
    },
    Synth {
        #[serde(default = "default_synth_meters")]
        meters: usize,
        #[serde(default = "default_synth_days")]
        days: usize,
        #[serde(default)]
        params: SynthConfig,
    },
}

fn uci_first_100() -> CsvSchema {
    CsvSchema {
        meters: MeterSelection::First(100),
        ..CsvSchema::uci()
    }
}

fn default_synth_meters() -> usize {
    10
}

fn default_synth_days() -> usize {
    365
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synth {
            meters: default_synth_meters(),
            days: default_synth_days(),
            params: SynthConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub source: DataSource,
    /// Target resolution in seconds.
    pub resample_secs: i64,
    /// Keep only this calendar year.
    pub year: Option<i32>,
    pub split: SplitSpec,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            source: DataSource::default(),
            resample_secs: 3600,
            year: None,
            split: SplitSpec::FirstMonths(6),
        }
    }
}

/// Tariff in the units prices are usually quoted in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TariffConfig {
    pub import_usd_per_mwh: f64,
    pub export_usd_per_mwh: f64,
    /// Part of the import price that is a grid charge.
    pub grid_usd_per_mwh: f64,
    pub peak_usd_per_mw_month: f64,
    pub calibration: TariffCalibration,
}

impl Default for TariffConfig {
    fn default() -> Self {
        Self {
            import_usd_per_mwh: 200.0,
            export_usd_per_mwh: 0.0,
            grid_usd_per_mwh: 70.0,
            peak_usd_per_mw_month: 5750.0,
            calibration: TariffCalibration::Fleet,
        }
    }
}

impl TariffConfig {
    pub fn base(&self) -> TariffModel {
        TariffModel {
            import: self.import_usd_per_mwh / 1000.0,
            export: self.export_usd_per_mwh / 1000.0,
            peak: self.peak_usd_per_mw_month / 1000.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostConfig {
    pub energy_usd_per_kwh: f64,
    pub power_usd_per_kw: f64,
    pub fixed_usd: f64,
    pub discount_rate: f64,
    pub lifetime_years: u32,
    pub represented_days: Option<f64>,
}

impl Default for CostConfig {
    fn default() -> Self {
        let c = CostModel::default();
        Self {
            energy_usd_per_kwh: c.energy,
            power_usd_per_kw: c.power,
            fixed_usd: c.fixed,
            discount_rate: c.rate,
            lifetime_years: c.lifetime,
            represented_days: c.days,
        }
    }
}

impl CostConfig {
    pub fn model(&self) -> CostModel {
        CostModel {
            energy: self.energy_usd_per_kwh,
            power: self.power_usd_per_kw,
            fixed: self.fixed_usd,
            rate: self.discount_rate,
            lifetime: self.lifetime_years,
            days: self.represented_days,
        }
    }
}

/// Controller and sizing matrix plus reporting options.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MatrixConfig {
    pub controllers: Vec<Controller>,
    pub sizings: Vec<SizingMethod>,
    /// Risk level of the adversarial RBC.
    pub alpha: f64,
    pub levels: Vec<f64>,
}

impl Default for MatrixConfig {
    fn default() -> Self {
        Self {
            controllers: Controller::ALL.to_vec(),
            sizings: vec![SizingMethod::Prescient, SizingMethod::Rbc],
            alpha: 0.95,
            levels: DEFAULT_LEVELS.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Seeds the synthetic generator and the optimizer.
    pub seed: u64,
    pub output: PathBuf,
    pub data: DataConfig,
    pub tariff: TariffConfig,
    pub cost: CostConfig,
    pub sizing: SizingOptions,
    pub de: DeConfig,
    pub mpc: MpcConfig,
    pub forecaster: ForecasterConfig,
    pub matrix: MatrixConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            output: PathBuf::from("results"),
            data: DataConfig::default(),
            tariff: TariffConfig::default(),
            cost: CostConfig::default(),
            sizing: SizingOptions::default(),
            de: DeConfig::default(),
            mpc: MpcConfig::default(),
            forecaster: ForecasterConfig::default(),
            matrix: MatrixConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.study().validate().map_err(as_config)?;
        if cfg.data.resample_secs <= 0 {
            return Err(Error::Config("data.resample_secs must be positive".into()));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn study(&self) -> StudyConfig {
        StudyConfig {
            tariff: self.tariff.base(),
            grid_volumetric: self.tariff.grid_usd_per_mwh / 1000.0,
            calibration: self.tariff.calibration,
            cost: self.cost.model(),
            sizing: self.sizing.clone(),
            de: DeConfig {
                seed: self.seed,
                ..self.de.clone()
            },
            alpha: self.matrix.alpha,
            mpc: self.mpc,
            forecaster: self.forecaster,
            controllers: self.matrix.controllers.clone(),
            sizings: self.matrix.sizings.clone(),
            levels: self.matrix.levels.clone(),
        }
    }

    pub fn data_dir(&self) -> PathBuf {
        self.output.join("data")
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.output.join("meters")
    }
}

fn as_config(e: Error) -> Error {
    match e {
        Error::InvalidInput(m) => Error::Config(m),
        other => other,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub meter: String,
    pub train_file: String,
    pub test_file: String,
    pub train_sha256: String,
    pub test_sha256: String,
    pub train_steps: usize,
    pub test_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub step_secs: i64,
    pub meters: Vec<ManifestEntry>,
}

/// Load, resample and select the configured meters.
pub fn load_series(cfg: &DataConfig, seed: u64) -> Result<Vec<PowerSeries>> {
    let raw = match &cfg.source {
        DataSource::Csv { path, schema } => ingest_csv(path, schema)?,
        DataSource::Synth { meters, days, params } => synth_fleet_with(params, seed, *meters, *days)?,
    };
    check_unique_ids(&raw)?;
    raw.iter()
        .map(|s| {
            let s = if s.step_secs() == cfg.resample_secs {
                s.clone()
            } else {
                resample(s, cfg.resample_secs)?
            };
            match cfg.year {
                Some(y) => s.select_year(y),
                None => Ok(s),
            }
        })
        .collect()
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn canonical_bytes(series: &PowerSeries) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_canonical_csv(std::slice::from_ref(series), &mut buf)?;
    Ok(buf)
}

/// Split every meter and write canonical train/test files plus the manifest
/// into `dir`. Unchanged input yields byte-identical output.
pub fn write_dataset(series: &[PowerSeries], split_spec: SplitSpec, dir: &Path) -> Result<Manifest> {
    fs::create_dir_all(dir)?;
    let mut meters = Vec::with_capacity(series.len());
    let mut step_secs = None;
    for s in series {
        if *step_secs.get_or_insert(s.step_secs()) != s.step_secs() {
            return Err(Error::Data("meters have different resolutions".into()));
        }
        let (train, test) = split(s, split_spec).map_err(|e| Error::Data(format!("meter {}: {e}", s.meter_id())))?;
        let stem = crate::evaluate::sanitize(s.meter_id());
        let (train_file, test_file) = (format!("{stem}_train.csv"), format!("{stem}_test.csv"));
        let (a, b) = (canonical_bytes(&train)?, canonical_bytes(&test)?);
        fs::write(dir.join(&train_file), &a)?;
        fs::write(dir.join(&test_file), &b)?;
        meters.push(ManifestEntry {
            meter: s.meter_id().to_string(),
            train_file,
            test_file,
            train_sha256: sha256_hex(&a),
            test_sha256: sha256_hex(&b),
            train_steps: train.len(),
            test_steps: test.len(),
        });
    }
    let manifest = Manifest {
        step_secs: step_secs.ok_or_else(|| Error::Data("no meters to write".into()))?,
        meters,
    };
    fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

fn read_checked(dir: &Path, file: &str, sha: &str, meter: &str) -> Result<PowerSeries> {
    let path = dir.join(file);
    let bytes = fs::read(&path)?;
    if sha256_hex(&bytes) != sha {
        return Err(Error::Data(format!("{}: checksum mismatch", path.display())));
    }
    let mut got = ingest_csv(&path, &CsvSchema::default())?;
    match got.pop() {
        Some(s) if got.is_empty() => Ok(s.with_id(meter)),
        _ => Err(Error::Data(format!("{}: expected exactly one meter column", path.display()))),
    }
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

/// Train/test pairs listed in the manifest, verified against their checksums.
pub fn read_dataset(dir: &Path, manifest: &Manifest) -> Result<Vec<(PowerSeries, PowerSeries)>> {
    manifest
        .meters
        .iter()
        .map(|m| {
            Ok((
                read_checked(dir, &m.train_file, &m.train_sha256, &m.meter)?,
                read_checked(dir, &m.test_file, &m.test_sha256, &m.meter)?,
            ))
        })
        .collect()
}
