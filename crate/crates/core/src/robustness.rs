//! Deterministic trend contamination `Y(t) = X(t) + M(t)` and paired Monte Carlo
//! comparisons of tapered estimators on `X` and `Y`.

use crate::error::{Error, Result};
use crate::functionals::{asymptotic_variance, default_periodogram, plugin_value, true_functional, GeneratingFunction};
use crate::models::{NoiseDriver, SpectralModel, TimeSeries};
use crate::stats::{batch_standard_error, ks_two_sample, mean, median, normality_diagnostics, variance, NormalityDiagnostics};
use crate::taper::Taper;
use crate::whittle::{whittle_estimate, WhittleConfig};
use rayon::prelude::*;
use serde::Serialize;
use std::fmt;
use std::sync::Arc;

#[derive(Clone)]
enum TrendKind {
    PowerDecay { c: f64, beta: f64 },
    Zero,
    Custom { name: String, f: Arc<dyn Fn(usize) -> f64 + Send + Sync> },
}

/// A deterministic trend `M(t)`, `t ≥ 1`.
#[derive(Clone)]
pub struct Trend {
    kind: TrendKind,
}

impl fmt::Debug for Trend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.describe())
    }
}

impl Trend {
    /// `M(t) = c t^{-β}` with `β > 1/4`.
    pub fn power_decay(c: f64, beta: f64) -> Result<Self> {
        if !(beta > 0.25) || !c.is_finite() {
            return Err(Error::Domain(format!(
                "power-decay trend needs beta > 1/4 and finite c, got c = {c}, beta = {beta}"
            )));
        }
        Ok(Trend {
            kind: TrendKind::PowerDecay { c, beta },
        })
    }

    pub fn zero() -> Self {
        Trend { kind: TrendKind::Zero }
    }

    pub fn custom<F: Fn(usize) -> f64 + Send + Sync + 'static>(name: &str, f: F) -> Self {
        Trend {
            kind: TrendKind::Custom {
                name: name.to_string(),
                f: Arc::new(f),
            },
        }
    }

    /// `c t^{-β}` without the lower bound on `β`, for negative controls.
    pub fn slow_power(c: f64, beta: f64) -> Self {
        Self::custom(&format!("slow-power:{c},{beta}"), move |t| c * (t as f64).powf(-beta))
    }

    /// `zero`, `power:c,beta` or `slow-power:c,beta`.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "zero" || s == "none" {
            return Ok(Self::zero());
        }
        let (head, args) = s
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("unknown trend `{s}`")))?;
        let nums: Vec<f64> = args
            .split(',')
            .map(|a| a.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Config(format!("bad trend parameters in `{s}`")))?;
        match (head, nums.as_slice()) {
            ("power", [c, beta]) => Self::power_decay(*c, *beta),
            ("slow-power", [c, beta]) => Ok(Self::slow_power(*c, *beta)),
            _ => Err(Error::Config(format!("unknown trend `{s}`"))),
        }
    }

    pub fn eval(&self, t: usize) -> f64 {
        match &self.kind {
            TrendKind::PowerDecay { c, beta } => c * (t as f64).powf(-beta),
            TrendKind::Zero => 0.0,
            TrendKind::Custom { f, .. } => f(t),
        }
    }

    /// `t ↦ k M(t)`.
    pub fn scaled(&self, k: f64) -> Self {
        match &self.kind {
            TrendKind::PowerDecay { c, beta } => Trend {
                kind: TrendKind::PowerDecay { c: k * c, beta: *beta },
            },
            TrendKind::Zero => Self::zero(),
            TrendKind::Custom { name, f } => {
                let f = f.clone();
                Self::custom(&format!("{k}*{name}"), move |t| k * f(t))
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.kind, TrendKind::Zero)
    }

    pub fn describe(&self) -> String {
        match &self.kind {
            TrendKind::PowerDecay { c, beta } => format!("power:{c},{beta}"),
            TrendKind::Zero => "zero".into(),
            TrendKind::Custom { name, .. } => name.clone(),
        }
    }
}

/// `Y(t) = X(t) + M(t)` for `t = 1..T`; the trend is appended to the provenance.
pub fn contaminate(series: &TimeSeries, trend: &Trend) -> TimeSeries {
    let mut out = series.clone();
    if !trend.is_zero() {
        for (i, v) in out.values.iter_mut().enumerate() {
            *v += trend.eval(i + 1);
        }
    }
    let label = trend.describe();
    out.provenance.trend = Some(match &series.provenance.trend {
        Some(prev) => format!("{prev}+{label}"),
        None => label,
    });
    out
}

/// `√T |J(I_Y) − J(I_X)|` with `Y = X + M`.
pub fn functional_gap(series: &TimeSeries, trend: &Trend, taper: &Taper, g: &GeneratingFunction) -> Result<f64> {
    let y = contaminate(series, trend);
    let jx = plugin_value(&default_periodogram(&series.values, taper, false)?, g);
    let jy = plugin_value(&default_periodogram(&y.values, taper, false)?, g);
    Ok((series.len() as f64).sqrt() * (jy - jx).abs())
}

#[derive(Debug, Clone)]
pub enum RobustnessTarget {
    /// `J(f, g)`, standardized by `σ_h`.
    Functional(GeneratingFunction),
    /// First Whittle parameter, `√T(θ̂ − θ₀)`.
    Whittle(WhittleConfig),
}

#[derive(Debug, Clone)]
pub struct RobustnessConfig {
    pub model: SpectralModel,
    pub driver: NoiseDriver,
    pub taper: Taper,
    pub trend: Trend,
    pub target: RobustnessTarget,
    pub len: usize,
    pub reps: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairedRow {
    pub rep: usize,
    /// Estimate on the clean series.
    pub x: f64,
    /// Estimate on the contaminated series.
    pub y: f64,
    /// Standardized clean estimate.
    pub zx: f64,
    pub zy: f64,
    /// `√T |y − x|`.
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RobustnessReport {
    pub target: String,
    pub trend: String,
    pub len: usize,
    pub reps: usize,
    pub truth: f64,
    pub bias_x: f64,
    pub bias_y: f64,
    /// Variances of the standardized samples.
    pub var_x: f64,
    pub var_y: f64,
    pub var_ratio: f64,
    /// Two-sample KS distance between the standardized samples.
    pub ks_xy: f64,
    pub median_gap: f64,
    pub median_gap_se: f64,
    pub normality_x: Option<NormalityDiagnostics>,
    pub normality_y: Option<NormalityDiagnostics>,
    pub rows: Vec<PairedRow>,
}

/// Paired Monte Carlo: replication `r` draws `X` from stream `r`, adds the trend, and
/// evaluates the target on both series.
pub fn robustness_report(cfg: &RobustnessConfig) -> Result<RobustnessReport> {
    if cfg.reps < 2 {
        return Err(Error::Config("robustness needs at least 2 replications".into()));
    }
    let root_t = (cfg.len as f64).sqrt();
    let (truth, sd, label) = match &cfg.target {
        RobustnessTarget::Functional(g) => {
            let truth = true_functional(&cfg.model, g)?;
            let var = asymptotic_variance(&cfg.model, g, &cfg.taper, cfg.driver.kappa4())?;
            (truth, var.sqrt(), format!("functional:{}", g.name()))
        }
        RobustnessTarget::Whittle(_) => (cfg.model.theta()[0], 1.0, "whittle".to_string()),
    };
    let rows: Vec<PairedRow> = (0..cfg.reps)
        .into_par_iter()
        .map(|r| -> Result<PairedRow> {
            let x = cfg.model.simulate_stream(cfg.driver, cfg.len, cfg.seed, r as u64)?;
            let y = contaminate(&x, &cfg.trend);
            let estimate = |s: &TimeSeries| -> Result<f64> {
                match &cfg.target {
                    RobustnessTarget::Functional(g) => {
                        Ok(plugin_value(&default_periodogram(&s.values, &cfg.taper, false)?, g))
                    }
                    RobustnessTarget::Whittle(wc) => {
                        Ok(whittle_estimate(&s.values, &cfg.taper, &cfg.model, wc)?.theta_hat[0])
                    }
                }
            };
            let (ex, ey) = (estimate(&x)?, estimate(&y)?);
            Ok(PairedRow {
                rep: r,
                x: ex,
                y: ey,
                zx: root_t * (ex - truth) / sd,
                zy: root_t * (ey - truth) / sd,
                gap: root_t * (ey - ex).abs(),
            })
        })
        .collect::<Result<_>>()?;
    let xs: Vec<f64> = rows.iter().map(|r| r.x).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.y).collect();
    let zx: Vec<f64> = rows.iter().map(|r| r.zx).collect();
    let zy: Vec<f64> = rows.iter().map(|r| r.zy).collect();
    let gaps: Vec<f64> = rows.iter().map(|r| r.gap).collect();
    let (var_x, var_y) = (variance(&zx), variance(&zy));
    let batches = if cfg.reps >= 100 { 20 } else { 2 };
    Ok(RobustnessReport {
        target: label,
        trend: cfg.trend.describe(),
        len: cfg.len,
        reps: cfg.reps,
        truth,
        bias_x: mean(&xs) - truth,
        bias_y: mean(&ys) - truth,
        var_x,
        var_y,
        var_ratio: var_y / var_x,
        ks_xy: ks_two_sample(&zx, &zy),
        median_gap: median(&gaps),
        median_gap_se: batch_standard_error(&gaps, batches, median),
        normality_x: normality_diagnostics(&zx).ok(),
        normality_y: normality_diagnostics(&zy).ok(),
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapLadder {
    pub lens: Vec<usize>,
    pub median_gap: Vec<f64>,
    pub median_gap_se: Vec<f64>,
    /// Each median at most the previous one.
    pub nonincreasing: bool,
    /// The last median is below the first; false flags a trend too slow for robustness.
    pub shrinking: bool,
}

/// Median `√T`-gaps of a functional target over a ladder of sample sizes.
pub fn gap_ladder(base: &RobustnessConfig, lens: &[usize]) -> Result<GapLadder> {
    let mut med = vec![];
    let mut se = vec![];
    for &len in lens {
        let rep = robustness_report(&RobustnessConfig {
            len,
            ..base.clone()
        })?;
        med.push(rep.median_gap);
        se.push(rep.median_gap_se);
    }
    Ok(GapLadder {
        lens: lens.to_vec(),
        nonincreasing: med.windows(2).all(|w| w[1] <= w[0]),
        shrinking: med.last() < med.first(),
        median_gap: med,
        median_gap_se: se,
    })
}
