//! Linear spectral functionals `J(f, g) = ∫ f g dλ` and their tapered plug-in estimators.

use crate::error::{Error, Result};
use crate::quad::{spectral_integral, SpectralQuad};
use crate::spectrum::{tapered_periodogram, FrequencyGrid, Periodogram};
use crate::taper::Taper;
use crate::EvenSpectralFunction;
use serde::Serialize;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::{Arc, Mutex};

/// Largest series length accepted by the O(T²) quadratic form.
pub const QUADRATIC_FORM_LIMIT: usize = 1 << 14;

#[derive(Debug, Clone, PartialEq)]
pub enum GeneratingKind {
    /// `g ≡ 0`.
    Zero,
    /// `cos(uλ)`; `u = 0` is `g ≡ 1`.
    Cosine(u64),
    /// `Σ_k a_k cos(kλ)`.
    TrigPoly(Vec<f64>),
    /// Even symmetrization `½ 𝟙{|λ| ≤ μ}` of `𝟙_{[0, μ]}`, so that `∫ f g = ∫_0^μ f`.
    Indicator(f64),
    Custom,
}

type PointFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Even generating function carried with both its pointwise values and its Fourier
/// coefficients `ĝ(t) = ∫ e^{iλt} g(λ) dλ`.
#[derive(Clone)]
pub struct GeneratingFunction {
    kind: GeneratingKind,
    name: String,
    custom: Option<PointFn>,
    breakpoints: Vec<f64>,
    bounded_variation: bool,
    coefficient_cache: Arc<Mutex<HashMap<u64, f64>>>,
}

impl fmt::Debug for GeneratingFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GeneratingFunction")
            .field("kind", &self.kind)
            .field("name", &self.name)
            .finish()
    }
}

impl GeneratingFunction {
    fn build(kind: GeneratingKind, name: String, breakpoints: Vec<f64>) -> Self {
        GeneratingFunction {
            kind,
            name,
            custom: None,
            breakpoints,
            bounded_variation: true,
            coefficient_cache: Arc::new(Mutex::new(HashMap::new())),
        }
    }

    pub fn zero() -> Self {
        Self::build(GeneratingKind::Zero, "zero".into(), vec![])
    }

    pub fn cosine(u: u64) -> Self {
        Self::build(GeneratingKind::Cosine(u), format!("cos({u})"), vec![])
    }

    /// `g ≡ c`.
    pub fn constant(c: f64) -> Self {
        Self::trig_poly(vec![c])
    }

    /// `Σ_k a_k cos(kλ)` with `coeffs[k] = a_k`.
    pub fn trig_poly(coeffs: Vec<f64>) -> Self {
        let name = format!(
            "trig({})",
            coeffs.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(":")
        );
        Self::build(GeneratingKind::TrigPoly(coeffs), name, vec![])
    }

    /// Generating function of the spectral distribution `F(μ) = ∫_0^μ f`.
    pub fn indicator(mu: f64) -> Result<Self> {
        if !(mu > 0.0 && mu <= PI) {
            return Err(Error::Domain(format!("indicator endpoint must lie in (0, π], got {mu}")));
        }
        let bp = if mu < PI { vec![-mu, mu] } else { vec![] };
        Ok(Self::build(
            GeneratingKind::Indicator(mu),
            format!("indicator(0,{mu})"),
            bp,
        ))
    }

    /// Arbitrary even function; Fourier coefficients come from quadrature and are cached.
    /// `breakpoints` lists discontinuities in `(0, π)`.
    pub fn custom<F>(name: &str, f: F, bounded_variation: bool, breakpoints: &[f64]) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let mut bp: Vec<f64> = breakpoints.iter().flat_map(|&b| [-b.abs(), b.abs()]).collect();
        bp.sort_by(|a, b| a.total_cmp(b));
        GeneratingFunction {
            kind: GeneratingKind::Custom,
            name: name.to_string(),
            custom: Some(Arc::new(f)),
            breakpoints: bp,
            bounded_variation,
            coefficient_cache: Arc::new(Mutex::new(HashMap::new())),
        }
    }

    /// Parses `zero`, `one`, `cos:u`, `indicator:μ` (μ may be written `pi` or `pi/k`).
    pub fn parse(spec: &str) -> Result<Self> {
        let s = spec.trim();
        let bad = || Error::Config(format!("unknown generating function `{spec}`"));
        let angle = |v: &str| -> Result<f64> {
            let v = v.trim();
            if v == "pi" {
                return Ok(PI);
            }
            if let Some(k) = v.strip_prefix("pi/") {
                return k.parse::<f64>().map(|k| PI / k).map_err(|_| bad());
            }
            v.parse::<f64>().map_err(|_| bad())
        };
        match s.split_once(':') {
            None if s == "zero" => Ok(Self::zero()),
            None if s == "one" => Ok(Self::cosine(0)),
            Some(("cos", u)) => u.trim().parse::<u64>().map(Self::cosine).map_err(|_| bad()),
            Some(("indicator", mu)) => Self::indicator(angle(mu)?),
            _ => Err(bad()),
        }
    }

    pub fn kind(&self) -> &GeneratingKind {
        &self.kind
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn declared_bounded_variation(&self) -> bool {
        self.bounded_variation
    }

    pub fn is_zero(&self) -> bool {
        match &self.kind {
            GeneratingKind::Zero => true,
            GeneratingKind::TrigPoly(c) => c.iter().all(|&a| a == 0.0),
            _ => false,
        }
    }

    /// Highest frequency present, used to size quadrature panels.
    fn oscillation(&self) -> f64 {
        match &self.kind {
            GeneratingKind::Cosine(u) => *u as f64,
            GeneratingKind::TrigPoly(c) => c.len().saturating_sub(1) as f64,
            _ => 0.0,
        }
    }

    fn quad_options(&self, singular: bool) -> SpectralQuad {
        SpectralQuad {
            singular_at_zero: singular,
            breakpoints: self.breakpoints.clone(),
            oscillation: self.oscillation(),
        }
    }

    /// Exact-coefficient support: lags outside `0..bound` vanish, `None` if unbounded.
    fn coefficient_support(&self) -> Option<u64> {
        match &self.kind {
            GeneratingKind::Zero => Some(0),
            GeneratingKind::Cosine(u) => Some(u + 1),
            GeneratingKind::TrigPoly(c) => Some(c.len() as u64),
            _ => None,
        }
    }
}

impl EvenSpectralFunction for GeneratingFunction {
    fn value(&self, lambda: f64) -> f64 {
        match &self.kind {
            GeneratingKind::Zero => 0.0,
            GeneratingKind::Cosine(u) => (*u as f64 * lambda).cos(),
            GeneratingKind::TrigPoly(c) => c
                .iter()
                .enumerate()
                .map(|(k, a)| a * (k as f64 * lambda).cos())
                .sum(),
            GeneratingKind::Indicator(mu) => {
                let l = lambda.abs();
                if l < *mu || *mu >= PI {
                    0.5
                } else if l == *mu {
                    0.25
                } else {
                    0.0
                }
            }
            GeneratingKind::Custom => (self.custom.as_ref().expect("custom closure"))(lambda),
        }
    }

    fn fourier_coefficient(&self, lag: i64) -> Result<f64> {
        let t = lag.unsigned_abs();
        Ok(match &self.kind {
            GeneratingKind::Zero => 0.0,
            GeneratingKind::Cosine(0) => {
                if t == 0 {
                    2.0 * PI
                } else {
                    0.0
                }
            }
            GeneratingKind::Cosine(u) => {
                if t == *u {
                    PI
                } else {
                    0.0
                }
            }
            GeneratingKind::TrigPoly(c) => match c.get(t as usize) {
                None => 0.0,
                Some(a) if t == 0 => 2.0 * PI * a,
                Some(a) => PI * a,
            },
            GeneratingKind::Indicator(mu) => {
                if t == 0 {
                    *mu
                } else {
                    (mu * t as f64).sin() / t as f64
                }
            }
            GeneratingKind::Custom => {
                if let Some(v) = self.coefficient_cache.lock().expect("cache").get(&t) {
                    return Ok(*v);
                }
                let opts = self.quad_options(false).with_oscillation(t as f64);
                let v = spectral_integral(&|l: f64| (t as f64 * l).cos() * self.value(l), &opts)?;
                self.coefficient_cache.lock().expect("cache").insert(t, v);
                v
            }
        })
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.breakpoints.iter().copied().filter(|&b| b > 0.0).collect()
    }

    fn describe(&self) -> String {
        self.name.clone()
    }
}

/// `∫ ψ_1 ψ_2 ⋯ ψ_m dλ`, graded near zero if any factor is singular there.
pub(crate) fn integrate_product(factors: &[&dyn EvenSpectralFunction], oscillation: f64) -> Result<f64> {
    let singular = factors.iter().any(|f| f.singular_at_zero());
    let mut bp: Vec<f64> = factors
        .iter()
        .flat_map(|f| f.breakpoints())
        .flat_map(|b| [-b, b])
        .collect();
    bp.sort_by(|a, b| a.total_cmp(b));
    let opts = SpectralQuad {
        singular_at_zero: singular,
        breakpoints: bp,
        oscillation,
    };
    spectral_integral(&|l: f64| factors.iter().map(|f| f.value(l)).product::<f64>(), &opts)
}

/// `J(f, g) = ∫ f g dλ`.
pub fn true_functional(f: &dyn EvenSpectralFunction, g: &GeneratingFunction) -> Result<f64> {
    if g.is_zero() {
        return Ok(0.0);
    }
    integrate_product(&[f, g], g.oscillation())
}

/// `Σ_j I(λ_j) g(λ_j) w_j`.
pub fn plugin_value(pgram: &Periodogram, g: &GeneratingFunction) -> f64 {
    pgram.integrate(|l| g.value(l))
}

/// Where the plug-in variance comes from.
#[derive(Clone, Copy)]
pub enum VarianceSource<'a> {
    /// Known density and innovation fourth cumulant.
    Model {
        density: &'a dyn EvenSpectralFunction,
        kappa4: f64,
    },
    /// Bartlett-smoothed periodogram with window half-width `⌈T^{1/3}⌉` Fourier
    /// frequencies. Heuristic.
    Smoothed { kappa4: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FunctionalEstimate {
    pub value: f64,
    /// `σ²_h(J) / T`.
    pub variance_hat: f64,
    #[serde(rename = "T")]
    pub len: usize,
    pub taper: String,
    pub g: String,
    /// True when the variance comes from a smoothed periodogram rather than a model.
    pub variance_heuristic: bool,
}

impl FunctionalEstimate {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("plain struct serializes")
    }
}

/// Bartlett-smoothed periodogram on the same grid (circular in frequency).
pub fn smoothed_periodogram(pgram: &Periodogram) -> Vec<f64> {
    let len = pgram.sample_len();
    let n = pgram.values().len();
    let per_fourier = pgram.grid().fft_size().map(|s| s as f64 / len as f64).unwrap_or(1.0);
    let m = (((len as f64).cbrt().ceil()) * per_fourier).round().max(1.0) as i64;
    let weights: Vec<f64> = (-m..=m).map(|k| 1.0 - k.abs() as f64 / (m + 1) as f64).collect();
    let total: f64 = weights.iter().sum();
    let v = pgram.values();
    (0..n as i64)
        .map(|j| {
            (-m..=m)
                .zip(&weights)
                .map(|(k, w)| w * v[(j + k).rem_euclid(n as i64) as usize])
                .sum::<f64>()
                / total
        })
        .collect()
}

/// `J_T^h` with its plug-in variance.
pub fn plugin_estimate(
    pgram: &Periodogram,
    g: &GeneratingFunction,
    taper: &Taper,
    source: VarianceSource<'_>,
) -> Result<FunctionalEstimate> {
    if let Some(n) = pgram.grid().fft_size() {
        if n < 2 * pgram.sample_len() {
            return Err(Error::Shape(format!(
                "plug-in estimation needs oversample >= 2 (grid {n} points for T = {})",
                pgram.sample_len()
            )));
        }
    }
    if taper.name() != pgram.taper_name() {
        return Err(Error::Shape(format!(
            "periodogram built with taper `{}` but variance requested for `{}`",
            pgram.taper_name(),
            taper.name()
        )));
    }
    let value = plugin_value(pgram, g);
    let (sigma2, heuristic) = match source {
        VarianceSource::Model { density, kappa4 } => {
            (asymptotic_variance(density, g, taper, kappa4)?, false)
        }
        VarianceSource::Smoothed { kappa4 } => {
            let e = taper.tapering_factor()?;
            let fhat = smoothed_periodogram(pgram);
            let grid = pgram.grid();
            let mut sq = 0.0;
            let mut lin = 0.0;
            for ((&l, &w), &f) in grid.points().iter().zip(grid.weights()).zip(&fhat) {
                let gv = g.value(l);
                sq += f * f * gv * gv * w;
                lin += f * gv * w;
            }
            (4.0 * PI * e * sq + kappa4 * e * lin * lin, true)
        }
    };
    Ok(FunctionalEstimate {
        value,
        variance_hat: sigma2 / pgram.sample_len() as f64,
        len: pgram.sample_len(),
        taper: taper.name().to_string(),
        g: g.name().to_string(),
        variance_heuristic: heuristic,
    })
}

/// `Q_T^h = Σ_t Σ_s ĝ(t - s) h(t/T) h(s/T) X(t) X(s)` with exact coefficients of `g`.
pub fn quadratic_form(series: &[f64], taper: &Taper, g: &GeneratingFunction) -> Result<f64> {
    let len = series.len();
    if len > QUADRATIC_FORM_LIMIT {
        return Err(Error::Size {
            what: "quadratic form length",
            size: len,
            limit: QUADRATIC_FORM_LIMIT,
        });
    }
    let y: Vec<f64> = taper
        .weights(len)
        .iter()
        .zip(series)
        .map(|(h, x)| h * x)
        .collect();
    let max_lag = match g.coefficient_support() {
        Some(s) => (s as usize).min(len),
        None => len,
    };
    let mut q = 0.0;
    for v in 0..max_lag {
        let c = g.fourier_coefficient(v as i64)?;
        if c == 0.0 {
            continue;
        }
        let acf: f64 = y.iter().zip(&y[v..]).map(|(a, b)| a * b).sum();
        q += if v == 0 { c * acf } else { 2.0 * c * acf };
    }
    Ok(q)
}

/// `σ²_h(J) = 4π e(h) ∫ f² g² dλ + κ₄ e(h) (∫ f g dλ)²`.
pub fn asymptotic_variance(
    f: &dyn EvenSpectralFunction,
    g: &GeneratingFunction,
    taper: &Taper,
    kappa4: f64,
) -> Result<f64> {
    if g.is_zero() {
        return Ok(0.0);
    }
    let e = taper.tapering_factor()?;
    let sq = integrate_product(&[f, f, g, g], 2.0 * g.oscillation())?;
    let lin = if kappa4 != 0.0 { true_functional(f, g)? } else { 0.0 };
    Ok(4.0 * PI * e * sq + kappa4 * e * lin * lin)
}

/// Periodogram on the canonical grid used by the plug-in estimators.
pub fn default_periodogram(series: &[f64], taper: &Taper, shifted: bool) -> Result<Periodogram> {
    let grid = if shifted {
        FrequencyGrid::canonical_shifted(series.len(), 4)?
    } else {
        FrequencyGrid::canonical(series.len(), 4)?
    };
    tapered_periodogram(series, taper, &grid)
}

/// Estimate of `r(u)` via `g = cos(uλ)`.
pub fn covariance_estimate(
    series: &[f64],
    taper: &Taper,
    lag: u64,
    source: VarianceSource<'_>,
) -> Result<FunctionalEstimate> {
    let pgram = default_periodogram(series, taper, false)?;
    plugin_estimate(&pgram, &GeneratingFunction::cosine(lag), taper, source)
}

/// Estimate of `F(μ) = ∫_0^μ f`. The variance is `2π e(h) ∫_0^μ f² (+ κ₄ term)`, i.e.
/// `σ²_h` for the even symmetrization of `𝟙_{[0, μ]}`.
pub fn spectral_function_estimate(
    series: &[f64],
    taper: &Taper,
    mu: f64,
    source: VarianceSource<'_>,
) -> Result<FunctionalEstimate> {
    let g = GeneratingFunction::indicator(mu)?;
    // The half-step grid is symmetric about 0, so [0, μ] and [-μ, 0] get equal weight.
    let pgram = default_periodogram(series, taper, true)?;
    plugin_estimate(&pgram, &g, taper, source)
}

/// `ρ_h(u) = Σ_t h(t/T) h((t+u)/T) / Σ_t h²(t/T)` for `u = 0..T-1`.
pub fn taper_autocorrelation(taper: &Taper, len: usize) -> Vec<f64> {
    let h = taper.weights(len);
    let norm: f64 = h.iter().map(|v| v * v).sum();
    (0..len)
        .map(|u| h.iter().zip(&h[u..]).map(|(a, b)| a * b).sum::<f64>() / norm)
        .collect()
}

/// `Δ_{2,T}^h = ∬ f(λ) g(λ+μ) F_{2,T}^h(μ) dλ dμ - ∫ f g`, evaluated exactly in the lag
/// domain as `(1/2π) Σ_{|u|<T} f̂(u) ĝ(u) ρ_h(u) - ∫ f g`.
pub fn fejer_smoothing_error(
    f: &dyn EvenSpectralFunction,
    g: &GeneratingFunction,
    taper: &Taper,
    len: usize,
) -> Result<f64> {
    if len == 0 {
        return Err(Error::Domain("T must be positive".into()));
    }
    let h2: f64 = taper.dirichlet_at_zero(2, len);
    if !(h2 > 0.0) {
        return Err(Error::InvalidTaper(format!("taper `{}` has H_2,T(0) = 0", taper.name())));
    }
    let rho = taper_autocorrelation(taper, len);
    let support = g.coefficient_support().map(|s| s as usize).unwrap_or(len).min(len);
    let mut smoothed = 0.0;
    for (u, &r) in rho.iter().enumerate().take(support) {
        let gc = g.fourier_coefficient(u as i64)?;
        if gc == 0.0 {
            continue;
        }
        let term = f.fourier_coefficient(u as i64)? * gc * r;
        smoothed += if u == 0 { term } else { 2.0 * term };
    }
    Ok(smoothed / (2.0 * PI) - true_functional(f, g)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{NoiseDriver, SpectralModel};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn ar(theta: f64) -> SpectralModel {
        SpectralModel::ar1(theta, 1.0).unwrap()
    }

    #[test]
    fn coefficients_match_quadrature() {
        let gs = [
            GeneratingFunction::cosine(0),
            GeneratingFunction::cosine(3),
            GeneratingFunction::trig_poly(vec![0.5, -1.0, 0.25]),
            GeneratingFunction::indicator(1.0).unwrap(),
            GeneratingFunction::indicator(PI).unwrap(),
        ];
        for g in &gs {
            for t in 0..6i64 {
                let opts = g.quad_options(false).with_oscillation(t as f64);
                let q = spectral_integral(&|l: f64| (t as f64 * l).cos() * g.value(l), &opts).unwrap();
                assert_abs_diff_eq!(g.fourier_coefficient(t).unwrap(), q, epsilon = 1e-10);
                assert_eq!(g.fourier_coefficient(t).unwrap(), g.fourier_coefficient(-t).unwrap());
            }
        }
        let custom = GeneratingFunction::custom("c3", |l| (3.0 * l).cos(), true, &[]);
        assert_abs_diff_eq!(custom.fourier_coefficient(3).unwrap(), PI, epsilon = 1e-12);
        assert_abs_diff_eq!(custom.fourier_coefficient(2).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn true_functional_examples() {
        let wn = SpectralModel::white_noise(1.0).unwrap();
        assert_eq!(true_functional(&wn, &GeneratingFunction::zero()).unwrap(), 0.0);
        assert_abs_diff_eq!(
            true_functional(&wn, &GeneratingFunction::cosine(0)).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            true_functional(&ar(0.5), &GeneratingFunction::cosine(1)).unwrap(),
            2.0 / 3.0,
            epsilon = 1e-10
        );
        let fd = SpectralModel::arfima0d0(0.3).unwrap();
        let j = true_functional(&fd, &GeneratingFunction::cosine(2)).unwrap();
        assert!((j - fd.covariance(2).unwrap()).abs() < 1e-8);
    }

    #[test]
    fn asymptotic_variance_examples() {
        let wn = SpectralModel::white_noise(1.0).unwrap();
        let rect = Taper::rectangular();
        let one = GeneratingFunction::cosine(0);
        assert_eq!(asymptotic_variance(&wn, &GeneratingFunction::zero(), &rect, 0.0).unwrap(), 0.0);
        assert_abs_diff_eq!(asymptotic_variance(&wn, &one, &rect, 0.0).unwrap(), 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(asymptotic_variance(&wn, &one, &rect, 6.0).unwrap(), 8.0, epsilon = 1e-12);
        let tukey = Taper::tukey_hanning();
        assert_abs_diff_eq!(
            asymptotic_variance(&wn, &one, &tukey, 0.0).unwrap(),
            2.0 * 35.0 / 18.0,
            epsilon = 1e-10
        );
        let fd = SpectralModel::arfima0d0(0.3).unwrap();
        assert!(matches!(
            asymptotic_variance(&fd, &one, &rect, 0.0),
            Err(Error::Divergence(_))
        ));
        // White noise spectral function at μ = π: 2π ∫_0^π (1/2π)² = 1/2.
        let ind = GeneratingFunction::indicator(PI).unwrap();
        assert_abs_diff_eq!(asymptotic_variance(&wn, &ind, &rect, 0.0).unwrap(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn quadratic_form_examples() {
        let rect = Taper::rectangular();
        let one = GeneratingFunction::cosine(0);
        assert_eq!(quadratic_form(&[0.0; 10], &rect, &one).unwrap(), 0.0);
        let q = quadratic_form(&[1.0; 10], &rect, &one).unwrap();
        assert_abs_diff_eq!(q, 2.0 * PI * 10.0, epsilon = 1e-12);
        let pgram = default_periodogram(&[1.0; 10], &rect, false).unwrap();
        assert_abs_diff_eq!(q / pgram.c_t(), 1.0, epsilon = 1e-14);
        assert!(matches!(
            quadratic_form(&vec![0.0; QUADRATIC_FORM_LIMIT + 1], &rect, &one),
            Err(Error::Size { .. })
        ));
    }

    #[test]
    fn quadratic_form_matches_double_sum() {
        let x = ar(0.5).simulate(NoiseDriver::Gaussian, 40, 1).unwrap().values;
        let taper = Taper::linear();
        let h = taper.weights(40);
        let g = GeneratingFunction::indicator(1.2).unwrap();
        let mut direct = 0.0;
        for t in 0..40 {
            for s in 0..40 {
                direct += g.fourier_coefficient(t as i64 - s as i64).unwrap() * h[t] * h[s] * x[t] * x[s];
            }
        }
        let q = quadratic_form(&x, &taper, &g).unwrap();
        assert!((q - direct).abs() < 1e-10 * direct.abs());
    }

    #[test]
    fn plugin_equals_quadratic_form() {
        for (k, taper) in [Taper::rectangular(), Taper::linear(), Taper::tukey_hanning()]
            .into_iter()
            .enumerate()
        {
            for seed in 0..5 {
                let x = ar(0.5).simulate_stream(NoiseDriver::Gaussian, 256, 40 + k as u64, seed).unwrap().values;
                for g in [
                    GeneratingFunction::cosine(1),
                    GeneratingFunction::cosine(0),
                    GeneratingFunction::trig_poly(vec![1.0, 0.3, -0.2, 0.1]),
                ] {
                    let p = default_periodogram(&x, &taper, false).unwrap();
                    let j = plugin_value(&p, &g);
                    let q = quadratic_form(&x, &taper, &g).unwrap();
                    assert!((j * p.c_t() - q).abs() < 1e-8 * q.abs(), "{} {}: {} vs {q}", taper.name(), g.name(), j * p.c_t());
                }
            }
        }
    }

    #[test]
    fn plugin_estimate_wiring() {
        let rect = Taper::rectangular();
        let wn = SpectralModel::white_noise(1.0).unwrap();
        let src = VarianceSource::Model { density: &wn, kappa4: 0.0 };
        let est = covariance_estimate(&[0.0; 64], &rect, 0, src).unwrap();
        assert_eq!(est.value, 0.0);
        assert_abs_diff_eq!(est.variance_hat, 2.0 / 64.0, epsilon = 1e-12);
        let json = est.to_json();
        for key in ["\"value\"", "\"variance_hat\"", "\"T\":64", "\"taper\":\"rect\"", "\"g\":\"cos(0)\""] {
            assert!(json.contains(key), "{json}");
        }
        let grid = FrequencyGrid::canonical(64, 1).unwrap();
        let p = tapered_periodogram(&[1.0; 64], &rect, &grid).unwrap();
        assert!(matches!(
            plugin_estimate(&p, &GeneratingFunction::cosine(1), &rect, src),
            Err(Error::Shape(_))
        ));
        assert!(spectral_function_estimate(&[1.0; 8], &rect, 0.0, src).is_err());
        assert!(spectral_function_estimate(&[1.0; 8], &rect, 4.0, src).is_err());
    }

    #[test]
    fn smoothed_variance_is_flagged_and_close() {
        let m = ar(0.5);
        let taper = Taper::tukey_hanning();
        let x = m.simulate(NoiseDriver::Gaussian, 4096, 8).unwrap().values;
        let est = covariance_estimate(&x, &taper, 1, VarianceSource::Smoothed { kappa4: 0.0 }).unwrap();
        assert!(est.variance_heuristic);
        let exact = asymptotic_variance(&m, &GeneratingFunction::cosine(1), &taper, 0.0).unwrap() / 4096.0;
        assert!((est.variance_hat / exact - 1.0).abs() < 0.3, "{} vs {exact}", est.variance_hat);
    }

    #[test]
    fn spectral_function_mean_level() {
        let rect = Taper::rectangular();
        let wn = SpectralModel::white_noise(1.0).unwrap();
        let m = ar(0.5);
        let truth = true_functional(&m, &GeneratingFunction::indicator(PI / 2.0).unwrap()).unwrap();
        let reps = 200;
        let (mut a, mut b) = (0.0, 0.0);
        for r in 0..reps {
            let x = wn.simulate_stream(NoiseDriver::Gaussian, 1024, 3, r).unwrap().values;
            let src = VarianceSource::Model { density: &wn, kappa4: 0.0 };
            a += spectral_function_estimate(&x, &rect, PI, src).unwrap().value;
            let y = m.simulate_stream(NoiseDriver::Gaussian, 1024, 4, r).unwrap().values;
            let src = VarianceSource::Model { density: &m, kappa4: 0.0 };
            b += spectral_function_estimate(&y, &Taper::tukey_hanning(), PI / 2.0, src).unwrap().value;
        }
        assert!((a / reps as f64 - 0.5).abs() < 0.01, "{}", a / reps as f64);
        assert!((b / reps as f64 - truth).abs() < 0.03 * truth, "{} vs {truth}", b / reps as f64);
        let tiny = spectral_function_estimate(&[1.0, -1.0, 0.5, 0.2], &rect, 1e-9, VarianceSource::Smoothed { kappa4: 0.0 }).unwrap();
        assert!(tiny.value.abs() < 1e-9);
    }

    #[test]
    fn fejer_error_constant_pair_is_zero() {
        let wn = SpectralModel::white_noise(1.0).unwrap();
        for taper in [Taper::rectangular(), Taper::tukey_hanning()] {
            let d = fejer_smoothing_error(&wn, &GeneratingFunction::cosine(0), &taper, 64).unwrap();
            assert!(d.abs() < 1e-14);
        }
    }

    /// Direct tensor quadrature of the defining double integral, for small `T`.
    fn tensor_fejer(f: &SpectralModel, g: &GeneratingFunction, taper: &Taper, len: usize) -> f64 {
        let n = 1024;
        let step = 2.0 * PI / n as f64;
        let pts: Vec<f64> = (0..n).map(|j| -PI + step * (j as f64 + 0.5)).collect();
        let kernel: Vec<f64> = pts
            .iter()
            .map(|&u| taper.fejer_kernel(2, len, &[u]).unwrap())
            .collect();
        let mut acc = 0.0;
        for &l in &pts {
            let fl = f.density(l);
            for (&u, &k) in pts.iter().zip(&kernel) {
                acc += fl * g.value(l + u) * k * step * step;
            }
        }
        acc - true_functional(f, g).unwrap()
    }

    #[test]
    fn fejer_error_matches_tensor_quadrature() {
        let m = ar(0.5);
        let g = GeneratingFunction::cosine(1);
        for taper in [Taper::rectangular(), Taper::tukey_hanning()] {
            for len in [8, 16] {
                let exact = fejer_smoothing_error(&m, &g, &taper, len).unwrap();
                let tensor = tensor_fejer(&m, &g, &taper, len);
                assert!((exact - tensor).abs() < 1e-9, "{exact} vs {tensor}");
            }
        }
    }

    #[test]
    fn fejer_error_decays() {
        let m = ar(0.5);
        let g = GeneratingFunction::cosine(1);
        let taper = Taper::tukey_hanning();
        let ts = [64usize, 128, 256, 512, 1024, 2048];
        let vals: Vec<f64> = ts
            .iter()
            .map(|&t| fejer_smoothing_error(&m, &g, &taper, t).unwrap().abs())
            .collect();
        for w in vals.windows(2) {
            assert!(w[1] < w[0]);
        }
        assert!(vals[5] * 2048f64.sqrt() < 0.05);
        let xs: Vec<f64> = ts.iter().map(|&t| (t as f64).ln()).collect();
        let ys: Vec<f64> = vals.iter().map(|v| v.ln()).collect();
        let mx = xs.iter().sum::<f64>() / 6.0;
        let my = ys.iter().sum::<f64>() / 6.0;
        let slope = xs.iter().zip(&ys).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>()
            / xs.iter().map(|a| (a - mx).powi(2)).sum::<f64>();
        assert!(slope <= -0.85, "{slope}");
    }

    #[test]
    fn parse_generating_functions() {
        assert_eq!(GeneratingFunction::parse("cos:2").unwrap().kind(), &GeneratingKind::Cosine(2));
        assert_eq!(GeneratingFunction::parse("one").unwrap().kind(), &GeneratingKind::Cosine(0));
        assert_eq!(
            GeneratingFunction::parse("indicator:pi/2").unwrap().kind(),
            &GeneratingKind::Indicator(PI / 2.0)
        );
        assert!(GeneratingFunction::parse("sin:1").is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(20))]
        #[test]
        fn identity_holds_for_random_triples(
            values in proptest::collection::vec(-3.0f64..3.0, 256),
            taper_idx in 0usize..3,
            u in 0u64..6,
        ) {
            let taper = [Taper::rectangular(), Taper::linear(), Taper::tukey_hanning()][taper_idx].clone();
            let g = GeneratingFunction::cosine(u);
            let p = default_periodogram(&values, &taper, false).unwrap();
            let j = plugin_value(&p, &g);
            let q = quadratic_form(&values, &taper, &g).unwrap();
            prop_assert!((j * p.c_t() - q).abs() <= 1e-8 * q.abs().max(1e-12));
        }

        #[test]
        fn quadratic_form_is_symmetric(values in proptest::collection::vec(-3.0f64..3.0, 2..40)) {
            let taper = Taper::tukey_hanning();
            let g = GeneratingFunction::indicator(0.7).unwrap();
            let a = quadratic_form(&values, &taper, &g).unwrap();
            let h = taper.weights(values.len());
            let mut b = 0.0;
            for t in 0..values.len() {
                for s in 0..values.len() {
                    b += g.fourier_coefficient(s as i64 - t as i64).unwrap() * h[s] * h[t] * values[s] * values[t];
                }
            }
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()));
        }
    }
}
