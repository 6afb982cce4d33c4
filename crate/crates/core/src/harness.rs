//! Experiment configuration, the replication engine and report emission.
//!
//! A run is fully determined by its [`ExperimentConfig`]: replication `r` at sample size
//! `T` draws from stream `r` of a seed derived from `(seed, T)`, replications run in
//! parallel and are reduced in index order, and floats are written in round-trip form.

use crate::error::{Error, Result};
use crate::functionals::{
    asymptotic_variance, default_periodogram, fejer_smoothing_error, plugin_estimate, true_functional,
    GeneratingFunction, GeneratingKind, VarianceSource,
};
use crate::gof::{composite_limit_weights, composite_test, simple_test, BasisSpec, MixtureLaw};
use crate::models::{Family, NoiseDriver, SpectralModel};
use crate::quad::composite_gl;
use crate::robustness::{robustness_report, RobustnessConfig, RobustnessTarget, Trend};
use crate::spectrum::tapered_periodogram;
use crate::stats::{ks_statistic, mean, median, se_proportion, se_variance, variance};
use crate::taper::Taper;
use crate::toeplitz::{build_matrix, trace_limit, trace_product};
use crate::whittle::{info_matrices_for, whittle_estimate, whittle_grid, WeightFunction, WhittleConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};

pub use crate::stats::normality_diagnostics;

pub const MIN_LEN: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Simulate,
    Periodogram,
    EstimateFunctional,
    Whittle,
    Gof,
    TraceExperiment,
    Fejer,
    Robustness,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 8] = [
        ExperimentKind::Simulate,
        ExperimentKind::Periodogram,
        ExperimentKind::EstimateFunctional,
        ExperimentKind::Whittle,
        ExperimentKind::Gof,
        ExperimentKind::TraceExperiment,
        ExperimentKind::Fejer,
        ExperimentKind::Robustness,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Simulate => "simulate",
            ExperimentKind::Periodogram => "periodogram",
            ExperimentKind::EstimateFunctional => "estimate-functional",
            ExperimentKind::Whittle => "whittle",
            ExperimentKind::Gof => "gof",
            ExperimentKind::TraceExperiment => "trace-experiment",
            ExperimentKind::Fejer => "fejer",
            ExperimentKind::Robustness => "robustness",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == name)
            .ok_or_else(|| Error::Config(format!("unknown experiment `{name}`")))
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Experiment-specific settings. Unused keys are allowed by the schema but ignored.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Options {
    /// Generating function, e.g. `cos:1`, `indicator:pi/2`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<String>,
    /// Plug-in variance source: `model` or `smoothed`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variance: Option<String>,
    /// Whittle weight: `unit` or `lorentz`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oversample: Option<usize>,
    /// Hold the Whittle scale at this value instead of profiling it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_scale: Option<f64>,
    /// `simple` or `composite`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basis: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Model that generates the data in a `gof` run (power studies); defaults to `model`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alt: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trend: Option<String>,
    /// `functional` or `whittle`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair: Option<String>,
    /// Fejér tail cut-off.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
}

/// Bound on one aggregate metric. Without `T` it applies to the run-level metrics if the
/// name is found there, and to every sample size otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckSpec {
    pub metric: String,
    #[serde(rename = "T", default, skip_serializing_if = "Option::is_none")]
    pub len: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default = "default_model")]
    pub model: String,
    #[serde(default = "default_driver")]
    pub driver: String,
    #[serde(default = "default_taper")]
    pub taper: String,
    #[serde(rename = "T", default = "default_lens")]
    pub lens: Vec<usize>,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Output path prefix; `<out>.csv` and `<out>.json` are written.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
    #[serde(default)]
    pub options: Options,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub check: Vec<CheckSpec>,
}

fn default_model() -> String {
    "ar1{theta=0.5}".into()
}
fn default_driver() -> String {
    "gaussian".into()
}
fn default_taper() -> String {
    "tukey".into()
}
fn default_lens() -> Vec<usize> {
    vec![1024]
}
fn default_reps() -> usize {
    100
}
fn default_seed() -> u64 {
    1
}

/// `64,128,256` or a single value.
pub fn parse_lens(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("bad sample size `{v}` in `{s}`")))
        })
        .collect()
}

impl ExperimentConfig {
    pub fn new(experiment: ExperimentKind) -> Self {
        ExperimentConfig {
            experiment,
            model: default_model(),
            driver: default_driver(),
            taper: default_taper(),
            lens: default_lens(),
            reps: default_reps(),
            seed: default_seed(),
            out: None,
            options: Options::default(),
            check: vec![],
        }
    }

    /// Parses and validates a TOML document; errors carry line and column.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Thresholds used by `--check` when the config has no `[[check]]` entries.
    pub fn default_checks(&self) -> Vec<CheckSpec> {
        let spec = |metric: &str, min: Option<f64>, max: Option<f64>| CheckSpec {
            metric: metric.to_string(),
            len: None,
            min,
            max,
        };
        let o = &self.options;
        match self.experiment {
            ExperimentKind::Simulate | ExperimentKind::Periodogram => vec![],
            ExperimentKind::EstimateFunctional => vec![
                spec("var_ratio", Some(0.9), Some(1.1)),
                spec("ks_pvalue", Some(0.01), None),
            ],
            ExperimentKind::Whittle => {
                let first = SpectralModel::parse(&self.model)
                    .ok()
                    .and_then(|m| m.param_names().into_iter().next())
                    .unwrap_or_else(|| "theta".into());
                vec![spec(&format!("var_ratio_{first}"), Some(0.85), Some(1.15))]
            }
            ExperimentKind::Gof if o.alt.is_none() => {
                let a = o.alpha.unwrap_or(0.05);
                vec![spec("rejection_rate", Some(a - 0.02), Some(a + 0.02))]
            }
            ExperimentKind::Gof => vec![],
            ExperimentKind::TraceExperiment => vec![
                spec("decreasing_fraction", Some(0.75), None),
                spec("final_delta", None, Some(0.01)),
            ],
            ExperimentKind::Fejer => vec![
                spec("max_normalization_error", None, Some(1e-6)),
                spec("tail_decreasing", Some(1.0), None),
            ],
            ExperimentKind::Robustness if o.target.as_deref() == Some("whittle") => {
                vec![
                    spec("var_ratio", Some(0.85), Some(1.15)),
                    spec("var_ratio_theory", Some(0.85), Some(1.15)),
                ]
            }
            ExperimentKind::Robustness => vec![spec("gap_nonincreasing", Some(1.0), None)],
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.resolve().map(|_| ())
    }

    fn resolve(&self) -> Result<Resolved> {
        if self.reps == 0 {
            return Err(Error::Config("reps must be at least 1".into()));
        }
        if self.lens.is_empty() {
            return Err(Error::Config("T needs at least one sample size".into()));
        }
        if let Some(&t) = self.lens.iter().find(|&&t| t < MIN_LEN) {
            return Err(Error::Config(format!("T entries must be at least {MIN_LEN}, got {t}")));
        }
        let o = &self.options;
        if let Some(a) = o.alpha {
            if !(a > 0.0 && a < 1.0) {
                return Err(Error::Config(format!("alpha must lie in (0, 1), got {a}")));
            }
        }
        if let Some(d) = o.delta {
            if !(d > 0.0 && d < PI) {
                return Err(Error::Config(format!("delta must lie in (0, π), got {d}")));
            }
        }
        let mode = o.mode.clone().unwrap_or_else(|| "simple".into());
        if mode != "simple" && mode != "composite" {
            return Err(Error::Config(format!("mode must be simple or composite, got `{mode}`")));
        }
        let target = o.target.clone().unwrap_or_else(|| "functional".into());
        if target != "functional" && target != "whittle" {
            return Err(Error::Config(format!("target must be functional or whittle, got `{target}`")));
        }
        let pair = o.pair.clone().unwrap_or_else(|| "ar1xcos".into());
        if pair != "ar1xcos" {
            return Err(Error::Config(format!("unknown trace pair `{pair}` (supported: ar1xcos)")));
        }
        let model = SpectralModel::parse(&self.model)?;
        if self.experiment == ExperimentKind::TraceExperiment && model.family() != Family::Ar1 {
            return Err(Error::Config("the ar1xcos pair needs an ar1 model".into()));
        }
        let driver = NoiseDriver::from_name(&self.driver)?;
        let weight = WeightFunction::from_name(o.weight.as_deref().unwrap_or("unit"))?;
        let whittle = WhittleConfig {
            weight,
            oversample: o.oversample.unwrap_or(4),
            fixed_scale: o.fixed_scale,
            kappa4: driver.kappa4(),
            ..WhittleConfig::default()
        };
        if ![1, 2, 4, 8].contains(&whittle.oversample) {
            return Err(Error::Config(format!("oversample must be 1, 2, 4 or 8, got {}", whittle.oversample)));
        }
        let g_default = if self.experiment == ExperimentKind::Fejer {
            "indicator:pi/2"
        } else {
            "cos:1"
        };
        Ok(Resolved {
            model,
            driver,
            taper: Taper::from_name(&self.taper)?,
            g: GeneratingFunction::parse(o.g.as_deref().unwrap_or(g_default))?,
            smoothed_variance: match o.variance.as_deref().unwrap_or("model") {
                "model" => false,
                "smoothed" => true,
                other => return Err(Error::Config(format!("variance must be model or smoothed, got `{other}`"))),
            },
            whittle,
            composite: mode == "composite",
            basis: BasisSpec::parse(o.basis.as_deref().unwrap_or("cosine:3"))?,
            alpha: o.alpha.unwrap_or(0.05),
            alt: o.alt.as_deref().map(SpectralModel::parse).transpose()?,
            trend: Trend::parse(o.trend.as_deref().unwrap_or("power:1,0.6"))?,
            whittle_target: target == "whittle",
            delta: o.delta.unwrap_or(0.5),
        })
    }
}

struct Resolved {
    model: SpectralModel,
    driver: NoiseDriver,
    taper: Taper,
    g: GeneratingFunction,
    smoothed_variance: bool,
    whittle: WhittleConfig,
    composite: bool,
    basis: BasisSpec,
    alpha: f64,
    alt: Option<SpectralModel>,
    trend: Trend,
    whittle_target: bool,
    delta: f64,
}

/// Seed for the sample size `len`, so ladders do not reuse draws across sizes.
pub fn derive_seed(seed: u64, len: usize) -> u64 {
    seed ^ (len as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

/// Runs `f(r)` for `r = 0..reps` in parallel and returns the results in index order.
pub fn replicate<T, F>(reps: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    (0..reps as u64).into_par_iter().map(f).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    /// `None` for run-level metrics.
    #[serde(rename = "T")]
    pub len: Option<usize>,
    pub reps: usize,
    pub metrics: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub metric: String,
    #[serde(rename = "T")]
    pub len: Option<usize>,
    pub value: f64,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub pass: bool,
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let at = self.len.map(|t| format!(" at T={t}")).unwrap_or_default();
        let lo = self.min.map(|v| format!("{v}")).unwrap_or_else(|| "-inf".into());
        let hi = self.max.map(|v| format!("{v}")).unwrap_or_else(|| "inf".into());
        write!(
            f,
            "{} {}{at} = {} in [{lo}, {hi}]",
            if self.pass { "PASS" } else { "FAIL" },
            self.metric,
            self.value
        )
    }
}

/// Per-replication (or per-size) rows, written as CSV.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&str]) -> Self {
        Table {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: vec![],
        }
    }

    /// Column by name, parsed as floats.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[idx].parse().unwrap_or(f64::NAN)).collect())
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(vec![]);
        let io = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(&self.header).map_err(io)?;
        for row in &self.rows {
            w.write_record(row).map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
    }
}

/// 17 significant digits.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub experiment: ExperimentKind,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub aggregates: Vec<Aggregate>,
    pub checks: Vec<CheckOutcome>,
    #[serde(skip)]
    pub table: Table,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    /// Looks up a metric for one sample size (`Some(T)`) or at run level (`None`).
    pub fn metric(&self, len: Option<usize>, name: &str) -> Option<f64> {
        self.aggregates
            .iter()
            .find(|a| a.len == len)
            .and_then(|a| a.metrics.get(name).copied())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map(|s| s + "\n")
            .map_err(|e| Error::Io(e.to_string()))
    }

    /// Writes `<prefix>.csv` and `<prefix>.json`; returns both paths.
    pub fn write(&self, prefix: &Path) -> Result<(PathBuf, PathBuf)> {
        if let Some(dir) = prefix.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let csv_path = prefix.with_extension("csv");
        let json_path = prefix.with_extension("json");
        std::fs::write(&csv_path, self.table.to_csv()?)?;
        std::fs::write(&json_path, self.to_json()?)?;
        Ok((csv_path, json_path))
    }

    fn evaluate_checks(&mut self, specs: &[CheckSpec]) {
        let mut out = vec![];
        for spec in specs {
            let targets: Vec<Option<usize>> = match spec.len {
                Some(t) => vec![Some(t)],
                None if self.metric(None, &spec.metric).is_some() => vec![None],
                None => self.aggregates.iter().filter(|a| a.len.is_some()).map(|a| a.len).collect(),
            };
            for len in targets {
                let value = self.metric(len, &spec.metric).unwrap_or(f64::NAN);
                let pass = value.is_finite()
                    && spec.min.is_none_or(|m| value >= m)
                    && spec.max.is_none_or(|m| value <= m);
                out.push(CheckOutcome {
                    metric: spec.metric.clone(),
                    len,
                    value,
                    min: spec.min,
                    max: spec.max,
                    pass,
                });
            }
        }
        self.checks = out;
    }
}

struct Builder {
    table: Table,
    aggregates: Vec<Aggregate>,
}

impl Builder {
    fn new(header: &[&str]) -> Self {
        Builder {
            table: Table::new(header),
            aggregates: vec![],
        }
    }

    fn aggregate(&mut self, len: Option<usize>, reps: usize, metrics: Vec<(&str, f64)>) {
        self.aggregates.push(Aggregate {
            len,
            reps,
            metrics: metrics.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        });
    }
}

/// Runs an experiment and evaluates its checks.
pub fn run(cfg: &ExperimentConfig) -> Result<Report> {
    let r = cfg.resolve()?;
    let b = match cfg.experiment {
        ExperimentKind::Simulate => run_simulate(cfg, &r)?,
        ExperimentKind::Periodogram => run_periodogram(cfg, &r)?,
        ExperimentKind::EstimateFunctional => run_functional(cfg, &r)?,
        ExperimentKind::Whittle => run_whittle(cfg, &r)?,
        ExperimentKind::Gof => run_gof(cfg, &r)?,
        ExperimentKind::TraceExperiment => run_trace(cfg, &r)?,
        ExperimentKind::Fejer => run_fejer(cfg, &r)?,
        ExperimentKind::Robustness => run_robustness(cfg, &r)?,
    };
    let mut report = Report {
        experiment: cfg.experiment,
        seed: cfg.seed,
        config: cfg.clone(),
        aggregates: b.aggregates,
        checks: vec![],
        table: b.table,
    };
    report.evaluate_checks(&cfg.check);
    Ok(report)
}

fn lag1_autocorrelation(x: &[f64]) -> f64 {
    let m = mean(x);
    let num: f64 = x.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum();
    let den: f64 = x.iter().map(|v| (v - m).powi(2)).sum();
    num / den
}

fn run_simulate(cfg: &ExperimentConfig, r: &Resolved) -> Result<Builder> {
    let mut b = Builder::new(&["T", "rep", "t", "value"]);
    let r0 = r.model.covariance(0)?;
    let r1 = r.model.covariance(1)?;
    for &len in &cfg.lens {
        let seed = derive_seed(cfg.seed, len);
        let series = replicate(cfg.reps, |rep| Ok(r.model.simulate_stream(r.driver, len, seed, rep)?.values))?;
        for (rep, x) in series.iter().enumerate() {
            for (t, v) in x.iter().enumerate() {
                b.table
                    .rows
                    .push(vec![len.to_string(), rep.to_string(), (t + 1).to_string(), fmt_float(*v)]);
            }
        }
        let means: Vec<f64> = series.iter().map(|x| mean(x)).collect();
        let vars: Vec<f64> = series.iter().map(|x| variance(x)).collect();
        let acf: Vec<f64> = series.iter().map(|x| lag1_autocorrelation(x)).collect();
        b.aggregate(
            Some(len),
            cfg.reps,
            vec![
                ("mean", mean(&means)),
                ("var", mean(&vars)),
                ("acf1", mean(&acf)),
                ("model_var", r0),
                ("model_acf1", r1 / r0),
            ],
        );
    }
    Ok(b)
}

fn run_periodogram(cfg: &ExperimentConfig, r: &Resolved) -> Result<Builder> {
    let mut b = Builder::new(&["T", "lambda", "mean_periodogram", "density"]);
    for &len in &cfg.lens {
        let seed = derive_seed(cfg.seed, len);
        let grid = whittle_grid(&r.model, len, r.whittle.oversample)?;
        let pgrams = replicate(cfg.reps, |rep| {
            let x = r.model.simulate_stream(r.driver, len, seed, rep)?;
            Ok(tapered_periodogram(&x.values, &r.taper, &grid)?.values().to_vec())
        })?;
        let mut ratios = vec![];
        for (j, &l) in grid.points().iter().enumerate() {
            let avg = pgrams.iter().map(|p| p[j]).sum::<f64>() / cfg.reps as f64;
            let f = r.model.density(l);
            ratios.push(avg / f);
            b.table
                .rows
                .push(vec![len.to_string(), fmt_float(l), fmt_float(avg), fmt_float(f)]);
        }
        b.aggregate(
            Some(len),
            cfg.reps,
            vec![("mean_ratio", mean(&ratios)), ("median_ratio", median(&ratios))],
        );
    }
    Ok(b)
}

fn run_functional(cfg: &ExperimentConfig, r: &Resolved) -> Result<Builder> {
    let mut b = Builder::new(&["T", "rep", "value", "variance_hat", "z"]);
    let kappa4 = r.driver.kappa4();
    let truth = true_functional(&r.model, &r.g)?;
    let sigma2 = asymptotic_variance(&r.model, &r.g, &r.taper, kappa4)?;
    let sigma2_gauss = asymptotic_variance(&r.model, &r.g, &r.taper, 0.0)?;
    let shifted = r.model.is_fractional() || matches!(r.g.kind(), GeneratingKind::Indicator(_));
    for &len in &cfg.lens {
        let seed = derive_seed(cfg.seed, len);
        let root_t = (len as f64).sqrt();
        let ests = replicate(cfg.reps, |rep| {
            let x = r.model.simulate_stream(r.driver, len, seed, rep)?;
            let pg = default_periodogram(&x.values, &r.taper, shifted)?;
            let source = if r.smoothed_variance {
                VarianceSource::Smoothed { kappa4 }
            } else {
                VarianceSource::Model {
                    density: &r.model,
                    kappa4,
                }
            };
            plugin_estimate(&pg, &r.g, &r.taper, source)
        })?;
        let values: Vec<f64> = ests.iter().map(|e| e.value).collect();
        let z: Vec<f64> = values.iter().map(|v| root_t * (v - truth) / sigma2.sqrt()).collect();
        for (rep, (e, zi)) in ests.iter().zip(&z).enumerate() {
            b.table.rows.push(vec![
                len.to_string(),
                rep.to_string(),
                fmt_float(e.value),
                fmt_float(e.variance_hat),
                fmt_float(*zi),
            ]);
        }
        let mut m = vec![
            ("truth", truth),
            ("mean", mean(&values)),
            ("bias", mean(&values) - truth),
            ("sigma2", sigma2),
            ("sigma2_gaussian", sigma2_gauss),
            ("coverage_95", z.iter().filter(|v| v.abs() < 1.959_963_984_540_054).count() as f64 / z.len() as f64),
        ];
        if cfg.reps >= 2 {
            let t_var = len as f64 * variance(&values);
            let t_var_se = len as f64 * se_variance(&values);
            m.extend([
                ("t_var", t_var),
                ("t_var_se", t_var_se),
                ("var_ratio", t_var / sigma2),
                ("var_ratio_se", t_var_se / sigma2),
                ("gaussian_gap_z", (t_var - sigma2_gauss) / t_var_se),
            ]);
        }
        if let Ok(d) = normality_diagnostics(&z) {
            m.extend([
                ("ks_stat", d.ks_stat),
                ("ks_pvalue", d.ks_pvalue),
                ("skew", d.skew),
                ("kurt", d.kurt),
            ]);
        }
        b.aggregate(Some(len), cfg.reps, m);
    }
    Ok(b)
}

fn run_whittle(cfg: &ExperimentConfig, r: &Resolved) -> Result<Builder> {
    let free: Vec<usize> = match r.whittle.fixed_scale {
        Some(_) => (0..r.model.scale_index()).collect(),
        None => (0..r.model.dim()).collect(),
    };
    let names: Vec<String> = free.iter().map(|&k| r.model.param_names()[k].clone()).collect();
    let mut header = vec!["T".to_string(), "rep".to_string()];
    header.extend(names.iter().cloned());
    header.extend(["objective".to_string(), "converged".to_string()]);
    let mut b = Builder {
        table: Table {
            header,
            rows: vec![],
        },
        aggregates: vec![],
    };
    let e = r.taper.tapering_factor()?;
    let info = info_matrices_for(&r.model, &free, r.whittle.weight, r.whittle.kappa4)?;
    for &len in &cfg.lens {
        let seed = derive_seed(cfg.seed, len);
        let fits = replicate(cfg.reps, |rep| {
            let x = r.model.simulate_stream(r.driver, len, seed, rep)?;
            whittle_estimate(&x.values, &r.taper, &r.model, &r.whittle)
        })?;
        for (rep, f) in fits.iter().enumerate() {
            let mut row = vec![len.to_string(), rep.to_string()];
            row.extend(f.theta_hat.iter().map(|v| fmt_float(*v)));
            row.push(fmt_float(f.objective_value));
            row.push(f.converged.to_string());
            b.table.rows.push(row);
        }
        let mut m: Vec<(String, f64)> = vec![
            ("e_h".into(), e),
            (
                "converged_fraction".into(),
                fits.iter().filter(|f| f.converged).count() as f64 / fits.len() as f64,
            ),
        ];
        for (c, (&k, name)) in free.iter().zip(&names).enumerate() {
            let est: Vec<f64> = fits.iter().map(|f| f.theta_hat[c]).collect();
            let truth = r.model.theta()[k];
            let gamma = info.gamma[(c, c)];
            m.push((format!("mean_{name}"), mean(&est)));
            m.push((format!("bias_{name}"), mean(&est) - truth));
            m.push((format!("gamma_{name}"), gamma));
            if cfg.reps >= 2 {
                let t_var = len as f64 * variance(&est);
                let t_var_se = len as f64 * se_variance(&est);
                m.push((format!("t_var_{name}"), t_var));
                m.push((format!("t_var_{name}_se"), t_var_se));
                m.push((format!("var_over_gamma_{name}"), t_var / gamma));
                m.push((format!("var_ratio_{name}"), t_var / (e * gamma)));
            }
        }
        b.aggregates.push(Aggregate {
            len: Some(len),
            reps: cfg.reps,
            metrics: m.into_iter().collect(),
        });
    }
    Ok(b)
}

fn run_gof(cfg: &ExperimentConfig, r: &Resolved) -> Result<Builder> {
    let mut b = Builder::new(&["T", "rep", "S", "p_value", "reject"]);
    let data_model = r.alt.clone().unwrap_or_else(|| r.model.clone());
    let wcfg = &r.whittle;
    let law = if r.composite {
        let free: Vec<usize> = match wcfg.fixed_scale {
            Some(_) => (0..r.model.scale_index()).collect(),
            None => (0..r.model.dim()).collect(),
        };
        let basis = r.basis.resolve(&r.model)?;
        MixtureLaw::new(composite_limit_weights(&r.model, &basis, &r.taper, &free, wcfg)?)
    } else {
        let basis = r.basis.resolve(&r.model)?;
        MixtureLaw::new(vec![1.0; (0..basis.len()).filter(|&j| !basis.is_null(j)).count()])
    };
    let cdf = law.cdf_fn();
    for &len in &cfg.lens {
        let seed = derive_seed(cfg.seed, len);
        let results = replicate(cfg.reps, |rep| {
            let x = data_model.simulate_stream(r.driver, len, seed, rep)?;
            if r.composite {
                composite_test(&x.values, &r.taper, &r.model, &r.basis, wcfg, r.alpha)
            } else {
                simple_test(&x.values, &r.taper, &r.model, &r.basis, r.alpha)
            }
        })?;
        for (rep, res) in results.iter().enumerate() {
            b.table.rows.push(vec![
                len.to_string(),
                rep.to_string(),
                fmt_float(res.statistic),
                fmt_float(res.p_value),
                res.reject.to_string(),
            ]);
        }
        let s: Vec<f64> = results.iter().map(|x| x.statistic).collect();
        let rate = results.iter().filter(|x| x.reject).count() as f64 / results.len() as f64;
        let mut m = vec![
            ("rejection_rate", rate),
            ("rejection_rate_se", se_proportion(rate, results.len())),
            ("mean_S", mean(&s)),
            ("ks_law", ks_statistic(&s, &cdf)),
            ("alpha", r.alpha),
        ];
        if let Some(dof) = law.exact_dof() {
            m.push(("law_dof", dof as f64));
        }
        b.aggregate(Some(len), cfg.reps, m);
    }
    Ok(b)
}

fn run_trace(cfg: &ExperimentConfig, r: &Resolved) -> Result<Builder> {
    let mut b = Builder::new(&["T", "S", "M", "Delta"]);
    let limit = trace_limit(&[&r.model, &r.g], &r.taper)?;
    let mut deltas = vec![];
    for &len in &cfg.lens {
        let mf = build_matrix(&r.model, &r.taper, len)?;
        let mg = build_matrix(&r.g, &r.taper, len)?;
        let s = trace_product(&[&mf, &mg])?;
        let delta = (s - limit).abs();
        deltas.push(delta);
        b.table
            .rows
            .push(vec![len.to_string(), fmt_float(s), fmt_float(limit), fmt_float(delta)]);
        b.aggregate(Some(len), 1, vec![("S", s), ("M", limit), ("Delta", delta)]);
    }
    let decreasing = deltas.windows(2).filter(|w| w[1] < w[0]).count();
    let mut m = vec![
        ("decreasing_steps", decreasing as f64),
        ("steps", deltas.len().saturating_sub(1) as f64),
        ("decreasing_fraction", decreasing as f64 / deltas.len().saturating_sub(1).max(1) as f64),
        ("final_delta", *deltas.last().expect("nonempty ladder")),
        ("limit", limit),
    ];
    // For g = cos(uλ), ∫ f g is the lag-u autocovariance in closed form.
    if let GeneratingKind::Cosine(u) = r.g.kind() {
        let oracle = 2.0 * PI * r.taper.moment(4) * r.model.covariance(*u as i64)?;
        m.push(("limit_oracle", oracle));
        m.push(("limit_error", (limit - oracle).abs()));
    }
    b.aggregate(None, 1, m);
    Ok(b)
}

/// `∫ F_{2,T}` over `[-π, π]` and the mass outside `[-δ, δ]`, by quadrature of the kernel.
pub fn fejer_profile(taper: &Taper, len: usize, delta: f64) -> Result<(f64, f64)> {
    let kernel = |u: f64| taper.fejer_kernel(2, len, &[u]).unwrap_or(f64::NAN);
    let panels = |w: f64| ((w * len as f64 / PI).ceil() as usize).max(8);
    let total = composite_gl(&kernel, -PI, PI, panels(2.0 * PI));
    let tail = 2.0 * composite_gl(&kernel, delta, PI, panels(PI - delta));
    if !total.is_finite() || !tail.is_finite() {
        return Err(Error::InvalidTaper(format!("Fejér kernel undefined for taper `{}`", taper.name())));
    }
    Ok((total, tail))
}

fn run_fejer(cfg: &ExperimentConfig, r: &Resolved) -> Result<Builder> {
    let mut b = Builder::new(&["T", "normalization", "tail_mass", "delta2", "scaled_delta2"]);
    let rows = cfg
        .lens
        .par_iter()
        .map(|&len| -> Result<(usize, f64, f64, f64)> {
            let (norm, tail) = fejer_profile(&r.taper, len, r.delta)?;
            let d2 = fejer_smoothing_error(&r.model, &r.g, &r.taper, len)?;
            Ok((len, norm, tail, d2))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut tails = vec![];
    let mut worst_norm: f64 = 0.0;
    for (len, norm, tail, d2) in rows {
        let scaled = (len as f64).sqrt() * d2.abs();
        b.table.rows.push(vec![
            len.to_string(),
            fmt_float(norm),
            fmt_float(tail),
            fmt_float(d2),
            fmt_float(scaled),
        ]);
        b.aggregate(
            Some(len),
            1,
            vec![
                ("normalization", norm),
                ("normalization_error", (norm - 1.0).abs()),
                ("tail_mass", tail),
                ("delta2", d2),
                ("scaled_delta2", scaled),
            ],
        );
        worst_norm = worst_norm.max((norm - 1.0).abs());
        tails.push(tail);
    }
    let decreasing = tails.windows(2).all(|w| w[1] < w[0]);
    b.aggregate(
        None,
        1,
        vec![
            ("tail_decreasing", if decreasing { 1.0 } else { 0.0 }),
            ("max_normalization_error", worst_norm),
        ],
    );
    Ok(b)
}

fn run_robustness(cfg: &ExperimentConfig, r: &Resolved) -> Result<Builder> {
    let mut b = Builder::new(&["T", "rep", "x", "y", "zx", "zy", "gap"]);
    let target = if r.whittle_target {
        RobustnessTarget::Whittle(r.whittle.clone())
    } else {
        RobustnessTarget::Functional(r.g.clone())
    };
    let theory_var = if r.whittle_target {
        let free: Vec<usize> = match r.whittle.fixed_scale {
            Some(_) => (0..r.model.scale_index()).collect(),
            None => (0..r.model.dim()).collect(),
        };
        let info = info_matrices_for(&r.model, &free, r.whittle.weight, r.driver.kappa4())?;
        Some(r.taper.tapering_factor()? * info.gamma[(0, 0)])
    } else {
        None
    };
    let mut medians = vec![];
    for &len in &cfg.lens {
        let rep = robustness_report(&RobustnessConfig {
            model: r.model.clone(),
            driver: r.driver,
            taper: r.taper.clone(),
            trend: r.trend.clone(),
            target: target.clone(),
            len,
            reps: cfg.reps,
            seed: derive_seed(cfg.seed, len),
        })?;
        for row in &rep.rows {
            b.table.rows.push(vec![
                len.to_string(),
                row.rep.to_string(),
                fmt_float(row.x),
                fmt_float(row.y),
                fmt_float(row.zx),
                fmt_float(row.zy),
                fmt_float(row.gap),
            ]);
        }
        let mut m = vec![
            ("truth", rep.truth),
            ("bias_x", rep.bias_x),
            ("bias_y", rep.bias_y),
            ("var_x", rep.var_x),
            ("var_y", rep.var_y),
            ("var_ratio", rep.var_ratio),
            ("ks_xy", rep.ks_xy),
            ("median_gap", rep.median_gap),
            ("median_gap_se", rep.median_gap_se),
        ];
        if let Some(v) = theory_var {
            m.push(("var_ratio_theory", rep.var_y / v));
        }
        if let Some(d) = &rep.normality_y {
            m.push(("ks_pvalue_y", d.ks_pvalue));
        }
        if let Some(d) = &rep.normality_x {
            m.push(("ks_pvalue_x", d.ks_pvalue));
        }
        medians.push(rep.median_gap);
        b.aggregate(Some(len), cfg.reps, m);
    }
    if medians.len() >= 2 {
        let nonincreasing = medians.windows(2).all(|w| w[1] <= w[0]);
        let shrinking = medians.last() < medians.first();
        b.aggregate(
            None,
            cfg.reps,
            vec![
                ("gap_nonincreasing", if nonincreasing { 1.0 } else { 0.0 }),
                ("gap_shrinking", if shrinking { 1.0 } else { 0.0 }),
            ],
        );
    }
    Ok(b)
}
