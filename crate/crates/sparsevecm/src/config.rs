//! Pipeline configuration.
//!
//! The config file is TOML. Any key can be overridden from the command
//! line as `--set dotted.key=value` (the value is parsed as a TOML literal,
//! falling back to a plain string); the common keys also have dedicated
//! flags. Relative paths are resolved against the config file's directory.
//! Without a `seed` key the `SPARSEVECM_SEED` environment variable is used.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sparsevecm_core::bootstrap::{BootstrapSpec, RefitMode};
use sparsevecm_core::panel::PeriodSpec;
use sparsevecm_core::ElasticNetConfig;

use crate::error::{AppError, AppResult};

pub const SEED_ENV: &str = "SPARSEVECM_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub prices: PathBuf,
    pub cpi: Option<PathBuf>,
    /// `YYYY-MM`; the first month of the panel when absent.
    pub cpi_base: Option<String>,
    pub output: PathBuf,
    pub seed: Option<u64>,
    /// Commodity blocks in display order; all commodities in the input,
    /// sorted, when absent.
    pub commodities: Option<Vec<String>>,
    /// Named, ordered, non-overlapping date ranges. One period spanning the
    /// whole panel when empty.
    pub periods: Vec<PeriodSpec>,
    /// Regions with a larger missing share in any period are dropped.
    pub exclusion_threshold: f64,
    /// Fixed lag order; chosen by AIC per period when absent.
    pub lags: Option<usize>,
    pub max_lag: usize,
    /// Largest ADF augmentation lag; `12 (n/100)^{1/4}` when absent.
    pub adf_max_lag: Option<usize>,
    pub significance: f64,
    /// Lag order of the Chow regressions at period boundaries.
    pub chow_lags: usize,
    /// Fit each commodity block on its own for the rank table.
    pub rank_by_commodity: bool,
    pub elastic_net: ElasticNetConfig,
    pub jirf: JirfSettings,
    pub bootstrap: BootstrapSettings,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            prices: PathBuf::new(),
            cpi: None,
            cpi_base: None,
            output: PathBuf::from("out"),
            seed: None,
            commodities: None,
            periods: Vec::new(),
            exclusion_threshold: 0.25,
            lags: None,
            max_lag: 4,
            adf_max_lag: None,
            significance: 0.05,
            chow_lags: 2,
            rank_by_commodity: true,
            elastic_net: ElasticNetConfig::default(),
            jirf: JirfSettings::default(),
            bootstrap: BootstrapSettings::default(),
            base_dir: PathBuf::from("."),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MagnitudeSource {
    SeriesStd,
    ResidualStd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSettings {
    pub name: String,
    pub series: Vec<String>,
    /// Explicit magnitudes; the default source is used when absent.
    pub magnitudes: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JirfSettings {
    pub horizon: usize,
    pub shock_source: MagnitudeSource,
    /// Size of the top-regions scenario (0 disables it).
    pub top_k: usize,
    /// Commodity of the top-regions scenario; the first block by default.
    pub top_k_commodity: Option<String>,
    /// Scenarios added to the defaults.
    pub scenarios: Vec<ScenarioSettings>,
}

impl Default for JirfSettings {
    fn default() -> Self {
        JirfSettings {
            horizon: 8,
            shock_source: MagnitudeSource::SeriesStd,
            top_k: 3,
            top_k_commodity: None,
            scenarios: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BootstrapSettings {
    pub replicates: usize,
    pub confidence: f64,
    pub recompute_shocks: bool,
    pub keep_draws: bool,
    pub refit: RefitMode,
    pub max_drop_fraction: f64,
}

impl Default for BootstrapSettings {
    fn default() -> Self {
        let d = BootstrapSpec::default();
        BootstrapSettings {
            replicates: d.replicates,
            confidence: d.confidence,
            recompute_shocks: d.recompute_shocks,
            keep_draws: d.keep_draws,
            refit: d.refit,
            max_drop_fraction: d.max_drop_fraction,
        }
    }
}

impl BootstrapSettings {
    pub fn spec(&self, seed: u64) -> BootstrapSpec {
        BootstrapSpec {
            replicates: self.replicates,
            seed,
            confidence: self.confidence,
            refit: self.refit,
            recompute_shocks: self.recompute_shocks,
            keep_draws: self.keep_draws,
            max_drop_fraction: self.max_drop_fraction,
        }
    }
}

/// Parses `key=value` into a dotted key and a TOML value.
pub fn parse_override(s: &str) -> AppResult<(String, toml::Value)> {
    let (key, raw) = s
        .split_once('=')
        .ok_or_else(|| AppError::Config(format!("override `{s}` is not key=value")))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(AppError::Config(format!("override `{s}` has an empty key")));
    }
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    Ok((key.to_string(), value))
}

fn set_path(table: &mut toml::Table, key: &str, value: toml::Value) -> AppResult<()> {
    let mut parts = key.split('.').peekable();
    let mut cur = table;
    while let Some(part) = parts.next() {
        if parts.peek().is_none() {
            cur.insert(part.to_string(), value);
            return Ok(());
        }
        let entry = cur
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| AppError::Config(format!("`{part}` in `{key}` is not a table")))?;
    }
    Ok(())
}

impl PipelineConfig {
    /// Parses TOML text, applies overrides and validates.
    pub fn from_toml(text: &str, base_dir: &Path, overrides: &[(String, toml::Value)]) -> AppResult<Self> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| AppError::Config(e.to_string()))?;
        for (k, v) in overrides {
            set_path(&mut table, k, v.clone())?;
        }
        let mut config: PipelineConfig =
            toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| AppError::Config(e.to_string()))?;
        config.base_dir = base_dir.to_path_buf();
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path, overrides: &[(String, toml::Value)]) -> AppResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
        let dir = path.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf);
        Self::from_toml(&text, &dir, overrides)
    }

    pub fn validate(&self) -> AppResult<()> {
        if self.prices.as_os_str().is_empty() {
            return Err(AppError::Config("`prices` path is required".into()));
        }
        if self.output.as_os_str().is_empty() {
            return Err(AppError::Config("`output` path is required".into()));
        }
        for w in self.periods.windows(2) {
            if w[1].start <= w[0].end {
                return Err(AppError::Config(format!(
                    "periods `{}` and `{}` overlap or are out of order",
                    w[0].name, w[1].name
                )));
            }
        }
        if let Some(p) = self.periods.iter().find(|p| p.end < p.start) {
            return Err(AppError::Config(format!("period `{}` ends before it starts", p.name)));
        }
        if self.max_lag == 0 || self.lags == Some(0) || self.chow_lags == 0 {
            return Err(AppError::Config("lag orders must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.exclusion_threshold) {
            return Err(AppError::Config("exclusion_threshold must be in [0, 1]".into()));
        }
        self.elastic_net.validate()?;
        self.bootstrap.spec(0).validate()?;
        Ok(())
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.output)
    }

    /// Config key, then `SPARSEVECM_SEED`, then 0.
    pub fn resolved_seed(&self) -> AppResult<u64> {
        if let Some(s) = self.seed {
            return Ok(s);
        }
        match std::env::var(SEED_ENV) {
            Ok(v) => v
                .trim()
                .parse()
                .map_err(|_| AppError::Config(format!("{SEED_ENV}=`{v}` is not an unsigned integer"))),
            Err(_) => Ok(0),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}
