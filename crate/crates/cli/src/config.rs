//! Pipeline configuration: a TOML file whose keys can be overridden from the
//! command line.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use loadcast::baselines::ArmaConfig;
use loadcast::clustering::{KMeansParams, Season};
use loadcast::congestion::{CongestionParams, FfttMode, MissingPolicy};
use loadcast::data::{parse_clock, TimeGrid, WeekdayName};
use loadcast::features::FeatureKind;
use loadcast::pipeline::Protocol;
use loadcast::regression::{AlphaGrid, CvConfig, LassoParams, Target};
use loadcast::synth::ScenarioSpec;
use loadcast::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Seed for clustering, cross-validation and the gap reference sets.
    pub seed: u64,
    pub paths: PathsConfig,
    pub grid: GridConfig,
    pub calendar: CalendarConfig,
    pub clustering: ClusteringConfig,
    pub congestion: CongestionConfig,
    pub features: FeaturesConfig,
    pub evaluation: EvaluationConfig,
    pub baselines: BaselinesConfig,
    pub similarity: SimilarityConfig,
    pub sweep: SweepConfig,
    /// Scenario written by `synth`; its own seed drives the data.
    pub synth: ScenarioSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// Defaults to `<output>/electricity.csv`.
    pub electricity: Option<PathBuf>,
    /// Defaults to `<output>/travel_time.csv`.
    pub travel: Option<PathBuf>,
    pub output: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub interval_minutes: u32,
    pub window_start: String,
    pub window_end: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalendarConfig {
    pub weekdays: BTreeSet<WeekdayName>,
    pub start: Option<NaiveDate>,
    pub end: Option<NaiveDate>,
    /// Keep only the days of one season from a two-way seasonal split.
    pub season: Option<Season>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusteringConfig {
    pub k: usize,
    /// Choose K by the gap statistic over `gap_k_min..=gap_k_max` instead of
    /// using `k`.
    pub gap: bool,
    pub gap_k_min: usize,
    pub gap_k_max: usize,
    pub gap_references: usize,
    pub restarts: usize,
    pub max_iters: usize,
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CongestionConfig {
    pub ratio: f64,
    pub persistence: usize,
    pub window_start: String,
    pub window_end: String,
    pub fftt: FfttMode,
    pub missing: MissingPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeaturesConfig {
    /// Feature sets written by `features` and evaluated by `evaluate`.
    pub kinds: Vec<FeatureKind>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub targets: Vec<Target>,
    pub protocol: Protocol,
    pub outer_folds: usize,
    pub inner_folds: usize,
    pub alpha_grid: AlphaGrid,
    pub tol: f64,
    pub max_passes: usize,
    /// Also evaluate duration with the out-of-fold predicted CST as a feature.
    pub duration_with_cst: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselinesConfig {
    /// Travel times observed before this time feed the ARMA forecast.
    pub cutoff: String,
    pub p_max: usize,
    pub q_max: usize,
    /// Number of previous weekdays averaged by the historical mean.
    pub lookback: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimilarityConfig {
    /// Shrinkage at which selections are read off. When absent, the
    /// cross-validated disaggregate CST models from `evaluate` are used.
    pub alpha: Option<f64>,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// End times of the electricity window, each paired with `grid.window_start`.
    pub window_ends: Vec<String>,
    pub kinds: Vec<FeatureKind>,
    pub targets: Vec<Target>,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            electricity: None,
            travel: None,
            output: PathBuf::from("out"),
        }
    }
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            interval_minutes: 5,
            window_start: "00:00".into(),
            window_end: "06:00".into(),
        }
    }
}

impl Default for CalendarConfig {
    fn default() -> Self {
        use chrono::Weekday::{Thu, Tue, Wed};
        CalendarConfig {
            weekdays: WeekdayName::set(&[Tue, Wed, Thu]),
            start: None,
            end: None,
            season: None,
        }
    }
}

impl Default for ClusteringConfig {
    fn default() -> Self {
        let km = KMeansParams::new(10, 0);
        ClusteringConfig {
            k: km.k,
            gap: false,
            gap_k_min: 1,
            gap_k_max: 12,
            gap_references: 20,
            restarts: km.restarts,
            max_iters: km.max_iters,
            tol: km.tol,
        }
    }
}

impl Default for CongestionConfig {
    fn default() -> Self {
        let p = CongestionParams::default();
        CongestionConfig {
            ratio: p.ratio,
            persistence: p.persistence,
            window_start: "05:00".into(),
            window_end: "12:00".into(),
            fftt: p.fftt_mode,
            missing: p.missing,
        }
    }
}

impl Default for FeaturesConfig {
    fn default() -> Self {
        FeaturesConfig {
            kinds: vec![FeatureKind::Aggregate, FeatureKind::Disaggregate],
        }
    }
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        let cv = CvConfig::default();
        EvaluationConfig {
            targets: vec![Target::Cst, Target::Duration],
            protocol: Protocol::NestedCv,
            outer_folds: cv.outer_folds,
            inner_folds: cv.inner_folds,
            alpha_grid: cv.grid,
            tol: cv.lasso.tol,
            max_passes: cv.lasso.max_passes,
            duration_with_cst: true,
        }
    }
}

impl Default for BaselinesConfig {
    fn default() -> Self {
        let a = ArmaConfig::default();
        BaselinesConfig {
            cutoff: "06:00".into(),
            p_max: a.p_max,
            q_max: a.q_max,
            lookback: 5,
        }
    }
}

impl Default for SimilarityConfig {
    fn default() -> Self {
        SimilarityConfig {
            alpha: None,
            threshold: 0.0,
        }
    }
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            window_ends: vec!["02:00".into(), "04:00".into(), "06:00".into()],
            kinds: vec![FeatureKind::Aggregate],
            targets: vec![Target::Cst],
        }
    }
}

fn config_error(e: impl std::fmt::Display) -> Error {
    Error::Config(e.to_string())
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(config_error)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(config_error)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    /// Applies `section.key=value` overrides, where `value` is a TOML value
    /// and a bare word is read as a string.
    pub fn with_overrides(&self, overrides: &[String]) -> Result<Self> {
        if overrides.is_empty() {
            return Ok(self.clone());
        }
        let mut doc: toml::Table = toml::from_str(&self.to_toml()?).map_err(config_error)?;
        for item in overrides {
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{item}` is not key=value")))?;
            let value = parse_value(raw.trim());
            let mut table = &mut doc;
            let parts: Vec<&str> = key.trim().split('.').collect();
            let (last, parents) = parts.split_last().expect("split yields at least one part");
            for part in parents {
                table = table
                    .entry(part.to_string())
                    .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                    .as_table_mut()
                    .ok_or_else(|| {
                        Error::Config(format!("`{part}` in `{key}` is not a section"))
                    })?;
            }
            table.insert(last.to_string(), value);
        }
        let text = toml::to_string(&doc).map_err(config_error)?;
        Self::from_toml(&text)
    }

    /// Hex SHA-256 of the canonical TOML serialization.
    pub fn hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_toml()?.as_bytes())))
    }

    pub fn output_dir(&self) -> &Path {
        &self.paths.output
    }

    pub fn electricity_path(&self) -> PathBuf {
        self.paths
            .electricity
            .clone()
            .unwrap_or_else(|| self.paths.output.join("electricity.csv"))
    }

    pub fn travel_path(&self) -> PathBuf {
        self.paths
            .travel
            .clone()
            .unwrap_or_else(|| self.paths.output.join("travel_time.csv"))
    }

    pub fn profile_grid(&self) -> Result<TimeGrid> {
        TimeGrid::from_clock(
            self.grid.interval_minutes,
            &self.grid.window_start,
            &self.grid.window_end,
        )
    }

    pub fn kmeans(&self, k: usize) -> KMeansParams {
        KMeansParams {
            k,
            restarts: self.clustering.restarts,
            max_iters: self.clustering.max_iters,
            tol: self.clustering.tol,
            seed: self.seed,
        }
    }

    pub fn congestion_params(&self) -> Result<CongestionParams> {
        let c = &self.congestion;
        let params = CongestionParams {
            ratio: c.ratio,
            persistence: c.persistence,
            window_start_minute: parse_clock(&c.window_start)?,
            window_end_minute: parse_clock(&c.window_end)?,
            fftt_mode: c.fftt,
            missing: c.missing,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn cv(&self) -> CvConfig {
        let e = &self.evaluation;
        CvConfig {
            outer_folds: e.outer_folds,
            inner_folds: e.inner_folds,
            grid: e.alpha_grid.clone(),
            seed: self.seed,
            lasso: LassoParams {
                tol: e.tol,
                max_passes: e.max_passes,
            },
        }
    }

    pub fn arma(&self) -> Result<ArmaConfig> {
        Ok(ArmaConfig {
            cutoff_minute: parse_clock(&self.baselines.cutoff)?,
            p_max: self.baselines.p_max,
            q_max: self.baselines.q_max,
        })
    }

    /// Inclusive date range of the calendar filter.
    pub fn day_range(&self) -> std::ops::RangeInclusive<NaiveDate> {
        self.calendar.start.unwrap_or(NaiveDate::MIN)..=self.calendar.end.unwrap_or(NaiveDate::MAX)
    }

    pub fn validate(&self) -> Result<()> {
        self.profile_grid()?;
        self.congestion_params()?;
        self.arma()?;
        if self.calendar.weekdays.is_empty() {
            return Err(Error::Config("calendar.weekdays is empty".into()));
        }
        if self.clustering.k < 2 && !self.clustering.gap {
            return Err(Error::Config("clustering.k must be at least 2".into()));
        }
        if self.clustering.gap && self.clustering.gap_k_min > self.clustering.gap_k_max {
            return Err(Error::Config(
                "clustering.gap_k_min exceeds gap_k_max".into(),
            ));
        }
        if self.evaluation.outer_folds < 2 || self.evaluation.inner_folds < 2 {
            return Err(Error::Config(
                "cross-validation needs at least 2 folds per level".into(),
            ));
        }
        if self.seed > i64::MAX as u64 || self.synth.seed > i64::MAX as u64 {
            return Err(Error::Config(
                "seeds must fit in a signed 64-bit TOML integer".into(),
            ));
        }
        for end in &self.sweep.window_ends {
            parse_clock(end)?;
        }
        Ok(())
    }
}

fn parse_value(raw: &str) -> toml::Value {
    let wrapped = format!("v = {raw}");
    match toml::from_str::<toml::Table>(&wrapped).map(|mut t| t.remove("v")) {
        // Clock times and dates are strings in this config.
        Ok(Some(toml::Value::Datetime(_))) | Ok(None) | Err(_) => {
            toml::Value::String(raw.to_string())
        }
        Ok(Some(v)) => v,
    }
}
