//! Config-driven experiment runs: data, groups, rolling forecasts, metrics,
//! scaling-law fits and the plot-ready aggregation-error curve.
//!
//! Every CSV written here starts with `# config_hash=<hex>`; readers check it
//! so that stages from different configurations are never mixed.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{parse_load_csv, write_load_csv, ColumnMapping, Dataset};
use crate::error::{Error, Result};
use crate::forecast::{
    rolling_forecast_horizons, write_forecast_rows, ForecastRun, ForecasterSpec, RollingOptions,
    SarSpec, FORECAST_HEADER,
};
use crate::grouping::{
    aggregate_series, read_group_manifest, sample_groups, write_group_manifest, Group,
};
use crate::metrics::{evaluate, Metric, MetricReport};
use crate::rng;
use crate::scaling::{
    bootstrap_ci, classify_regime, critical_load, fit_scaling_law, predict_error, ErrorPoint,
    ScalingFit, DEFAULT_REGIME_FACTOR,
};
use crate::synth::{synth_population, DeviationModel, PopulationParams, ProfileParams};
use crate::theory::{mc_cv_check, mc_variance, variance_of_sum, write_cv_checks, CvCheck};

pub const DATA_FILE: &str = "data.csv";
pub const GROUPS_FILE: &str = "groups.csv";
pub const METRICS_FILE: &str = "metrics.csv";
pub const FORECASTS_FILE: &str = "forecasts.csv";
pub const CURVE_FILE: &str = "curve.csv";
pub const FITS_FILE: &str = "fits.csv";
pub const REPORT_FILE: &str = "report.csv";
pub const VARIANCE_FILE: &str = "theory_variance.csv";
pub const ENVELOPE_FILE: &str = "theory_envelope.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const FAILED_FILE: &str = "FAILED";

const RESULT_FILES: [&str; 7] = [
    GROUPS_FILE,
    METRICS_FILE,
    FORECASTS_FILE,
    CURVE_FILE,
    FITS_FILE,
    VARIANCE_FILE,
    ENVELOPE_FILE,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    #[serde(default = "default_metrics")]
    pub metrics: Vec<Metric>,
    /// Output directory; not part of the config hash.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Worker threads; not part of the config hash.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    pub data: DataSource,
    #[serde(default)]
    pub groups: GroupConfig,
    #[serde(default = "default_forecasters")]
    pub forecasters: Vec<NamedForecaster>,
    #[serde(default)]
    pub forecast: ForecastConfig,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default)]
    pub theory: TheoryConfig,
}

fn default_metrics() -> Vec<Metric> {
    vec![Metric::Mape, Metric::Cv]
}

fn default_forecasters() -> Vec<NamedForecaster> {
    vec![
        NamedForecaster {
            name: "naive".into(),
            spec: ForecasterSpec::SeasonalNaive { season: 24 },
            refit_every: None,
        },
        NamedForecaster {
            name: "sar".into(),
            spec: ForecasterSpec::Sar(SarSpec {
                ar_order: 3,
                seasonal_ar_order: 1,
                season: 24,
            }),
            refit_every: None,
        },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DataSource {
    Synth(SynthSource),
    Csv(CsvSource),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSource {
    #[serde(default = "default_customers")]
    pub customers: usize,
    #[serde(default = "default_days")]
    pub days: usize,
    #[serde(default)]
    pub profile: ProfileParams,
    #[serde(default = "default_deviation")]
    pub deviation: DeviationModel,
}

fn default_customers() -> usize {
    2000
}

fn default_days() -> usize {
    60
}

fn default_deviation() -> DeviationModel {
    DeviationModel::uncorrelated(0.2).expect("valid default")
}

impl Default for SynthSource {
    fn default() -> Self {
        Self {
            customers: default_customers(),
            days: default_days(),
            profile: ProfileParams::default(),
            deviation: default_deviation(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvSource {
    pub path: PathBuf,
    #[serde(default)]
    pub columns: ColumnMapping,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GroupConfig {
    pub sizes: Vec<usize>,
    pub replicates: usize,
}

impl Default for GroupConfig {
    fn default() -> Self {
        Self {
            sizes: vec![1, 2, 5, 10, 20, 50, 100, 200, 500, 1000, 2000],
            replicates: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedForecaster {
    pub name: String,
    #[serde(flatten)]
    pub spec: ForecasterSpec,
    /// Overrides `forecast.refit_every` for this model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refit_every: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForecastConfig {
    pub horizons: Vec<usize>,
    pub window: usize,
    /// First forecast origin; defaults to `window`.
    pub start: Option<usize>,
    pub refit_every: usize,
    pub write_forecasts: bool,
}

impl Default for ForecastConfig {
    fn default() -> Self {
        Self {
            horizons: vec![1],
            window: 672,
            start: None,
            refit_every: 1,
            write_forecasts: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub fixed_p: Option<f64>,
    /// Bootstrap replicates for the `√α₁` interval; 0 disables it.
    pub bootstrap: usize,
    pub level: f64,
    pub regime_factor: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            fixed_p: None,
            bootstrap: 1000,
            level: 0.95,
            regime_factor: DEFAULT_REGIME_FACTOR,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TheoryConfig {
    pub ns: Vec<usize>,
    pub trials: usize,
    pub variance_trials: usize,
    pub days: usize,
}

impl Default for TheoryConfig {
    fn default() -> Self {
        Self {
            ns: vec![1, 10, 100, 1000],
            trials: 100,
            variance_trials: 10_000,
            days: 14,
        }
    }
}

impl ExperimentConfig {
    /// A desk-scale synthetic configuration.
    pub fn desk(seed: u64) -> Self {
        Self {
            seed,
            metrics: default_metrics(),
            out: None,
            threads: None,
            data: DataSource::Synth(SynthSource::default()),
            groups: GroupConfig::default(),
            forecasters: default_forecasters(),
            forecast: ForecastConfig::default(),
            fit: FitConfig::default(),
            theory: TheoryConfig::default(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a TOML config; a relative CSV data path is taken relative to the file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text)?;
        if let DataSource::Csv(src) = &mut cfg.data {
            if src.path.is_relative() {
                if let Some(dir) = path.parent() {
                    src.path = dir.join(&src.path);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn start(&self) -> usize {
        self.forecast.start.unwrap_or(self.forecast.window)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        match &self.data {
            DataSource::Synth(s) => {
                if s.customers == 0 || s.days == 0 {
                    return bad("synthetic data needs customers >= 1 and days >= 1".into());
                }
                s.profile.validate()?;
                s.deviation.validate()?;
            }
            DataSource::Csv(_) => {}
        }
        if self.groups.sizes.is_empty() || self.groups.replicates == 0 {
            return bad("groups need at least one size and replicates >= 1".into());
        }
        if self.forecasters.is_empty() {
            return bad("at least one forecaster is required".into());
        }
        let mut names = HashSet::new();
        for f in &self.forecasters {
            if !names.insert(f.name.as_str()) {
                return bad(format!("forecaster name `{}` used twice", f.name));
            }
            f.spec.validate()?;
            if self.forecast.window < f.spec.min_window() {
                return bad(format!(
                    "window {} too short for forecaster `{}` (needs {})",
                    self.forecast.window,
                    f.name,
                    f.spec.min_window()
                ));
            }
            if f.refit_every == Some(0) {
                return bad(format!("forecaster `{}`: refit_every must be >= 1", f.name));
            }
        }
        if self.forecast.horizons.is_empty() || self.forecast.horizons.contains(&0) {
            return bad("horizons must be a non-empty list of values >= 1".into());
        }
        if self.forecast.refit_every == 0 {
            return bad("forecast.refit_every must be >= 1".into());
        }
        if self.start() < self.forecast.window {
            return bad("forecast.start must be >= window".into());
        }
        let unique_metrics: HashSet<_> = self.metrics.iter().collect();
        if self.metrics.is_empty() || unique_metrics.len() != self.metrics.len() {
            return bad("metrics must be a non-empty list without repeats".into());
        }
        if self.fit.bootstrap != 0 && self.fit.bootstrap < 100 {
            return bad("fit.bootstrap must be 0 (off) or >= 100".into());
        }
        if !(self.fit.level > 0.0 && self.fit.level < 1.0) {
            return bad("fit.level must lie in (0, 1)".into());
        }
        if !(self.fit.regime_factor >= 1.0) {
            return bad("fit.regime_factor must be >= 1".into());
        }
        if self.threads == Some(0) {
            return bad("threads must be >= 1".into());
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, ignoring `out` and `threads`.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.out = None;
        canonical.threads = None;
        let json = serde_json::to_string(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

/// One evaluated (forecaster, group, horizon) combination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub forecaster: String,
    pub group_id: String,
    pub size: usize,
    pub horizon: usize,
    pub w: f64,
    pub mape: f64,
    pub cv: f64,
    pub mse: f64,
    pub skipped_zero_targets: usize,
}

impl MetricRow {
    pub fn report(&self) -> MetricReport {
        MetricReport {
            mape: self.mape,
            cv: self.cv,
            mse: self.mse,
            skipped_zero_targets: self.skipped_zero_targets,
        }
    }

    pub fn error_point(&self, metric: Metric) -> ErrorPoint {
        ErrorPoint {
            group_id: self.group_id.clone(),
            size: self.size,
            w: self.w,
            err: self.report().get(metric),
            metric,
            horizon: self.horizon,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub forecaster: String,
    pub metric: Metric,
    pub horizon: usize,
    pub sqrt_alpha0: f64,
    pub sqrt_alpha1: f64,
    pub p: f64,
    pub w_star: Option<f64>,
    pub ci_lo: Option<f64>,
    pub ci_hi: Option<f64>,
    pub sse: f64,
}

impl FitRecord {
    pub fn new(forecaster: &str, fit: &ScalingFit) -> Self {
        Self {
            forecaster: forecaster.to_string(),
            metric: fit.metric,
            horizon: fit.horizon,
            sqrt_alpha0: fit.sqrt_alpha0(),
            sqrt_alpha1: fit.sqrt_alpha1(),
            p: fit.p,
            w_star: critical_load(fit).ok(),
            ci_lo: fit.ci_sqrt_alpha1.map(|c| c.0),
            ci_hi: fit.ci_sqrt_alpha1.map(|c| c.1),
            sse: fit.sse,
        }
    }

    pub fn fit(&self) -> ScalingFit {
        let mut f = ScalingFit::from_sqrt(
            self.sqrt_alpha0,
            self.sqrt_alpha1,
            self.p,
            self.metric,
            self.horizon,
        );
        f.sse = self.sse;
        f.ci_sqrt_alpha1 = self.ci_lo.zip(self.ci_hi);
        f
    }
}

/// A point of the aggregation-error curve with the fitted law and regime at its load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub forecaster: String,
    pub metric: Metric,
    pub horizon: usize,
    pub group_id: String,
    pub size: usize,
    pub w: f64,
    pub err: f64,
    pub fitted: f64,
    pub regime: String,
}

/// Everything a full run produces, in memory.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub groups: Vec<Group>,
    pub metrics: Vec<MetricRow>,
    pub fits: Vec<FitRecord>,
    pub curve: Vec<CurveRow>,
}

/// Forecaster name, group id and that group's runs (one per horizon).
pub type NamedRuns = (String, String, Vec<ForecastRun>);

pub struct Experiment {
    pub config: ExperimentConfig,
    pub hash: String,
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let hash = config.hash();
        Ok(Self { config, hash })
    }

    fn synth_source(&self) -> Result<&SynthSource> {
        match &self.config.data {
            DataSource::Synth(s) => Ok(s),
            DataSource::Csv(_) => Err(Error::Config(
                "this stage needs a synthetic data source".into(),
            )),
        }
    }

    pub fn dataset(&self) -> Result<Dataset> {
        match &self.config.data {
            DataSource::Synth(s) => Ok(synth_population(
                s.customers,
                s.days,
                &s.profile,
                &s.deviation,
                self.config.seed,
            )?
            .dataset),
            DataSource::Csv(c) => parse_load_csv(&c.path, &c.columns),
        }
    }

    pub fn groups(&self, dataset: &Dataset) -> Result<Vec<Group>> {
        sample_groups(
            dataset,
            &self.config.groups.sizes,
            self.config.groups.replicates,
            self.config.seed,
        )
    }

    /// Rolling forecasts for every (forecaster, group) pair. Returns metric
    /// rows ordered by forecaster, group, horizon, plus the raw runs when
    /// `keep_runs` is set.
    pub fn forecast(
        &self,
        dataset: &Dataset,
        groups: &[Group],
        keep_runs: bool,
    ) -> Result<(Vec<MetricRow>, Vec<NamedRuns>)> {
        let cfg = &self.config;
        let tasks: Vec<(&NamedForecaster, &Group)> = cfg
            .forecasters
            .iter()
            .flat_map(|f| groups.iter().map(move |g| (f, g)))
            .collect();
        let results: Vec<(Vec<MetricRow>, Option<Vec<ForecastRun>>)> = tasks
            .par_iter()
            .map(|&(f, g)| {
                let stage = |source: Error| Error::Stage {
                    group: g.id.clone(),
                    forecaster: f.name.clone(),
                    source: Box::new(source),
                };
                let agg = aggregate_series(dataset, g).map_err(stage)?;
                let opts = RollingOptions {
                    window: cfg.forecast.window,
                    start: cfg.start(),
                    refit_every: f.refit_every.unwrap_or(cfg.forecast.refit_every),
                };
                let runs =
                    rolling_forecast_horizons(&agg.series, &f.spec, &cfg.forecast.horizons, opts)
                        .map_err(stage)?;
                let rows = runs
                    .iter()
                    .map(|run| {
                        let r = evaluate(&run.targets, &run.predictions).map_err(stage)?;
                        Ok(MetricRow {
                            forecaster: f.name.clone(),
                            group_id: g.id.clone(),
                            size: g.size(),
                            horizon: run.horizon,
                            w: g.mean_w,
                            mape: r.mape,
                            cv: r.cv,
                            mse: r.mse,
                            skipped_zero_targets: r.skipped_zero_targets,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok((rows, keep_runs.then_some(runs)))
            })
            .collect::<Result<_>>()?;

        let mut rows = Vec::new();
        let mut runs = Vec::new();
        for ((f, g), (r, kept)) in tasks.iter().zip(results) {
            rows.extend(r);
            if let Some(k) = kept {
                runs.push((f.name.clone(), g.id.clone(), k));
            }
        }
        Ok((rows, runs))
    }

    /// One fit per (forecaster, metric, horizon), in config order.
    pub fn fit(&self, rows: &[MetricRow]) -> Result<Vec<FitRecord>> {
        let cfg = &self.config;
        let mut keys = Vec::new();
        for f in &cfg.forecasters {
            for &m in &cfg.metrics {
                for &h in &cfg.forecast.horizons {
                    keys.push((f.name.as_str(), m, h));
                }
            }
        }
        keys.iter()
            .enumerate()
            .map(|(k, &(name, metric, horizon))| {
                let stage = |source: Error| Error::Stage {
                    group: format!("all (metric {metric}, horizon {horizon})"),
                    forecaster: name.to_string(),
                    source: Box::new(source),
                };
                let points: Vec<ErrorPoint> = rows
                    .iter()
                    .filter(|r| r.forecaster == name && r.horizon == horizon)
                    .map(|r| r.error_point(metric))
                    .collect();
                let mut fit = fit_scaling_law(&points, cfg.fit.fixed_p).map_err(stage)?;
                if cfg.fit.bootstrap > 0 {
                    let seed = rng::child_seed(cfg.seed, rng::BOOTSTRAP, k as u64);
                    fit.ci_sqrt_alpha1 = Some(
                        bootstrap_ci(
                            &points,
                            cfg.fit.bootstrap,
                            cfg.fit.level,
                            seed,
                            cfg.fit.fixed_p,
                        )
                        .map_err(stage)?,
                    );
                }
                Ok(FitRecord::new(name, &fit))
            })
            .collect()
    }

    pub fn curve(&self, rows: &[MetricRow], fits: &[FitRecord]) -> Vec<CurveRow> {
        let mut out = Vec::new();
        for rec in fits {
            let fit = rec.fit();
            for r in rows
                .iter()
                .filter(|r| r.forecaster == rec.forecaster && r.horizon == rec.horizon)
            {
                out.push(CurveRow {
                    forecaster: rec.forecaster.clone(),
                    metric: rec.metric,
                    horizon: rec.horizon,
                    group_id: r.group_id.clone(),
                    size: r.size,
                    w: r.w,
                    err: r.report().get(rec.metric),
                    fitted: predict_error(&fit, r.w),
                    regime: classify_regime(r.w, &fit, self.config.fit.regime_factor).to_string(),
                });
            }
        }
        out
    }

    /// Full pipeline in memory.
    pub fn run(&self) -> Result<RunOutput> {
        let dataset = self.dataset()?;
        let groups = self.groups(&dataset)?;
        let (metrics, _) = self.forecast(&dataset, &groups, false)?;
        let fits = self.fit(&metrics)?;
        let curve = self.curve(&metrics, &fits);
        Ok(RunOutput {
            groups,
            metrics,
            fits,
            curve,
        })
    }

    pub fn variance_table(&self) -> Result<Vec<VarianceRow>> {
        let s = self.synth_source()?;
        self.config
            .theory
            .ns
            .iter()
            .enumerate()
            .map(|(k, &n)| {
                Ok(VarianceRow {
                    n,
                    closed_form: variance_of_sum(&s.deviation, n),
                    mc_variance: mc_variance(
                        &s.deviation,
                        n,
                        self.config.theory.variance_trials,
                        rng::child_seed(self.config.seed, rng::TRIAL, k as u64),
                    )?,
                })
            })
            .collect()
    }

    pub fn envelope_checks(&self) -> Result<Vec<CvCheck>> {
        let s = self.synth_source()?;
        let params = PopulationParams {
            days: self.config.theory.days,
            profile: s.profile,
            deviation: s.deviation,
        };
        self.config
            .theory
            .ns
            .iter()
            .enumerate()
            .map(|(k, &n)| {
                mc_cv_check(
                    &params,
                    n,
                    self.config.theory.trials,
                    rng::child_seed(self.config.seed, rng::TRIAL, 1_000_000 + k as u64),
                )
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceRow {
    pub n: usize,
    pub closed_form: f64,
    pub mc_variance: f64,
}

// ---- file IO ----

fn hash_line(hash: &str) -> String {
    format!("config_hash={hash}")
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(
        fs::File::create(path).map_err(|e| Error::io(path, e))?,
    ))
}

/// Writes serde records after a `# config_hash=` line.
fn write_records<T: Serialize>(path: &Path, hash: &str, records: &[T]) -> Result<()> {
    let mut out = create(path)?;
    writeln!(out, "# {}", hash_line(hash)).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// The config hash recorded in a file's first line.
pub fn read_file_hash(path: &Path) -> Result<String> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .next()
        .and_then(|l| l.strip_prefix("# config_hash="))
        .map(|h| h.trim().to_string())
        .ok_or_else(|| Error::Config(format!("{} carries no config hash", path.display())))
}

fn read_records<T: serde::de::DeserializeOwned>(
    path: &Path,
    expected_hash: Option<&str>,
) -> Result<(String, Vec<T>)> {
    let hash = read_file_hash(path)?;
    if let Some(exp) = expected_hash {
        if exp != hash {
            return Err(Error::Config(format!(
                "{} was produced by config {hash}, current config is {exp}",
                path.display()
            )));
        }
    }
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(file);
    let records = rdr
        .deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()?;
    Ok((hash, records))
}

pub fn write_metrics(path: &Path, hash: &str, rows: &[MetricRow]) -> Result<()> {
    write_records(path, hash, rows)
}

pub fn read_metrics(path: &Path, expected_hash: Option<&str>) -> Result<Vec<MetricRow>> {
    Ok(read_records(path, expected_hash)?.1)
}

pub fn write_fits(path: &Path, hash: &str, fits: &[FitRecord]) -> Result<()> {
    write_records(path, hash, fits)
}

pub fn read_fits(path: &Path) -> Result<(String, Vec<FitRecord>)> {
    read_records(path, None)
}

pub fn write_curve(path: &Path, hash: &str, curve: &[CurveRow]) -> Result<()> {
    write_records(path, hash, curve)
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    config_hash: &'a str,
    seed: u64,
    version: &'static str,
    config: &'a ExperimentConfig,
    files: BTreeMap<&'static str, String>,
}

fn write_manifest(exp: &Experiment, out: &Path) -> Result<()> {
    let mut files = BTreeMap::new();
    for name in RESULT_FILES {
        let path = out.join(name);
        if path.exists() {
            let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
            files.insert(name, hex::encode(Sha256::digest(&bytes)));
        }
    }
    let mut config = exp.config.clone();
    config.out = None;
    config.threads = None;
    let manifest = Manifest {
        config_hash: &exp.hash,
        seed: exp.config.seed,
        version: env!("CARGO_PKG_VERSION"),
        config: &config,
        files,
    };
    let path = out.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Config(e.to_string()))?;
    fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))
}

/// Runs `body` with a `FAILED` marker written on error (and cleared beforehand).
fn guarded<T>(out: &Path, body: impl FnOnce() -> Result<T>) -> Result<T> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let marker = out.join(FAILED_FILE);
    if marker.exists() {
        fs::remove_file(&marker).map_err(|e| Error::io(&marker, e))?;
    }
    body().inspect_err(|e| {
        let _ = fs::write(&marker, format!("{e}\n"));
    })
}

/// Writes the synthetic dataset as an ingestion-format CSV.
pub fn stage_synth(exp: &Experiment, out: &Path) -> Result<()> {
    guarded(out, || {
        exp.synth_source()?;
        let dataset = exp.dataset()?;
        let path = out.join(DATA_FILE);
        let mut w = create(&path)?;
        writeln!(w, "# {}", hash_line(&exp.hash)).map_err(|e| Error::io(&path, e))?;
        write_load_csv(&dataset, w)
    })
}

fn save_groups(exp: &Experiment, out: &Path, dataset: &Dataset, groups: &[Group]) -> Result<()> {
    let path = out.join(GROUPS_FILE);
    let mut w = create(&path)?;
    write_group_manifest(dataset, groups, &mut w, Some(&hash_line(&exp.hash)))?;
    w.flush().map_err(|e| Error::io(&path, e))
}

pub fn stage_groups(exp: &Experiment, out: &Path) -> Result<Vec<Group>> {
    guarded(out, || {
        let dataset = exp.dataset()?;
        let groups = exp.groups(&dataset)?;
        save_groups(exp, out, &dataset, &groups)?;
        write_manifest(exp, out)?;
        Ok(groups)
    })
}

fn save_forecasts(
    exp: &Experiment,
    out: &Path,
    dataset: &Dataset,
    groups: &[Group],
) -> Result<Vec<MetricRow>> {
    let keep = exp.config.forecast.write_forecasts;
    let (rows, runs) = exp.forecast(dataset, groups, keep)?;
    write_metrics(&out.join(METRICS_FILE), &exp.hash, &rows)?;
    if keep {
        let path = out.join(FORECASTS_FILE);
        let mut f = create(&path)?;
        writeln!(f, "# {}", hash_line(&exp.hash)).map_err(|e| Error::io(&path, e))?;
        let mut w = csv::Writer::from_writer(f);
        w.write_record(["forecaster"].iter().chain(FORECAST_HEADER.iter()))?;
        for (name, gid, group_runs) in &runs {
            for run in group_runs {
                write_forecast_rows(&mut w, &[name.as_str()], gid, run)?;
            }
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
    }
    Ok(rows)
}

/// Forecasts the groups recorded in `groups.csv` (which must come from the same config).
pub fn stage_forecast(exp: &Experiment, out: &Path) -> Result<Vec<MetricRow>> {
    guarded(out, || {
        let dataset = exp.dataset()?;
        let path = out.join(GROUPS_FILE);
        let hash = read_file_hash(&path)?;
        if hash != exp.hash {
            return Err(Error::Config(format!(
                "{} was produced by config {hash}",
                path.display()
            )));
        }
        let file = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
        let groups = read_group_manifest(&dataset, file)?;
        let rows = save_forecasts(exp, out, &dataset, &groups)?;
        write_manifest(exp, out)?;
        Ok(rows)
    })
}

fn save_fits(exp: &Experiment, out: &Path, rows: &[MetricRow]) -> Result<Vec<FitRecord>> {
    let fits = exp.fit(rows)?;
    write_fits(&out.join(FITS_FILE), &exp.hash, &fits)?;
    write_curve(&out.join(CURVE_FILE), &exp.hash, &exp.curve(rows, &fits))?;
    Ok(fits)
}

/// Fits the scaling law to `metrics.csv` (which must come from the same config).
pub fn stage_fit(exp: &Experiment, out: &Path) -> Result<Vec<FitRecord>> {
    guarded(out, || {
        let rows = read_metrics(&out.join(METRICS_FILE), Some(&exp.hash))?;
        let fits = save_fits(exp, out, &rows)?;
        write_manifest(exp, out)?;
        Ok(fits)
    })
}

pub fn stage_theory(exp: &Experiment, out: &Path) -> Result<(Vec<VarianceRow>, Vec<CvCheck>)> {
    guarded(out, || {
        let variance = exp.variance_table()?;
        write_records(&out.join(VARIANCE_FILE), &exp.hash, &variance)?;
        let checks = exp.envelope_checks()?;
        let path = out.join(ENVELOPE_FILE);
        let mut w = create(&path)?;
        writeln!(w, "# {}", hash_line(&exp.hash)).map_err(|e| Error::io(&path, e))?;
        write_cv_checks(&checks, &mut w)?;
        w.flush().map_err(|e| Error::io(&path, e))?;
        write_manifest(exp, out)?;
        Ok((variance, checks))
    })
}

/// One-shot run: groups, forecasts, metrics, fits, curve and manifest.
pub fn run_experiment(exp: &Experiment, out: &Path) -> Result<Vec<FitRecord>> {
    guarded(out, || {
        let dataset = exp.dataset()?;
        let groups = exp.groups(&dataset)?;
        save_groups(exp, out, &dataset, &groups)?;
        let rows = save_forecasts(exp, out, &dataset, &groups)?;
        let fits = save_fits(exp, out, &rows)?;
        write_manifest(exp, out)?;
        Ok(fits)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub source: String,
    #[serde(flatten)]
    pub fit: FitRecord,
}

/// Merges fit files (or run directories holding `fits.csv`) into one table
/// ranked by `√α₁` ascending. Files from different configs are rejected.
pub fn report(inputs: &[PathBuf]) -> Result<(String, Vec<ReportRow>)> {
    let mut hash: Option<String> = None;
    let mut rows = Vec::new();
    for input in inputs {
        let path = if input.is_dir() {
            input.join(FITS_FILE)
        } else {
            input.clone()
        };
        let (h, fits) = read_fits(&path)?;
        match &hash {
            Some(prev) if *prev != h => {
                return Err(Error::Config(format!(
                    "{} comes from config {h}, earlier files from {prev}",
                    path.display()
                )))
            }
            _ => hash = Some(h),
        }
        rows.extend(fits.into_iter().map(|fit| ReportRow {
            source: input.display().to_string(),
            fit,
        }));
    }
    let hash = hash.ok_or_else(|| Error::Empty("no fit files given".into()))?;
    rows.sort_by(|a, b| a.fit.sqrt_alpha1.total_cmp(&b.fit.sqrt_alpha1));
    Ok((hash, rows))
}

pub fn write_report(path: &Path, hash: &str, rows: &[ReportRow]) -> Result<()> {
    // flattened structs need the header written by hand
    let mut out = create(path)?;
    writeln!(out, "# {}", hash_line(hash)).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "source",
        "forecaster",
        "metric",
        "horizon",
        "sqrt_alpha0",
        "sqrt_alpha1",
        "p",
        "w_star",
        "ci_lo",
        "ci_hi",
        "sse",
    ])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        let f = &r.fit;
        w.write_record([
            r.source.clone(),
            f.forecaster.clone(),
            f.metric.to_string(),
            f.horizon.to_string(),
            f.sqrt_alpha0.to_string(),
            f.sqrt_alpha1.to_string(),
            f.p.to_string(),
            opt(f.w_star),
            opt(f.ci_lo),
            opt(f.ci_hi),
            f.sse.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Human-readable report table.
pub fn format_report(rows: &[ReportRow]) -> String {
    let mut s = format!(
        "{:<14} {:<6} {:>3} {:>10} {:>10} {:>7} {:>12} {:>21}\n",
        "forecaster", "metric", "h", "sqrt_a0", "sqrt_a1", "p", "W*", "95% CI sqrt_a1"
    );
    for r in rows {
        let f = &r.fit;
        let w_star = f.w_star.map_or("-".into(), |w| format!("{w:.1}"));
        let ci = match (f.ci_lo, f.ci_hi) {
            (Some(lo), Some(hi)) => format!("({lo:.3}, {hi:.3})"),
            _ => "-".into(),
        };
        s.push_str(&format!(
            "{:<14} {:<6} {:>3} {:>10.3} {:>10.3} {:>7.3} {:>12} {:>21}\n",
            f.forecaster,
            f.metric.as_str(),
            f.horizon,
            f.sqrt_alpha0,
            f.sqrt_alpha1,
            f.p,
            w_star,
            ci
        ));
    }
    s
}
