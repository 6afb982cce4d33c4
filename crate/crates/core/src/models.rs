//! Parametric spectral densities, their covariances, and seeded simulators.
//!
//! Parameter vectors always end with the multiplicative scale of the density, so the
//! Whittle code can profile it out in closed form:
//!
//! | family      | parameters                          | `f(λ)`                                        |
//! |-------------|-------------------------------------|-----------------------------------------------|
//! | white noise | `σ²`                                | `σ²/2π`                                       |
//! | AR(1)       | `θ, σ²`                             | `σ²/2π · |1 - θe^{-iλ}|^{-2}`                 |
//! | ARMA(p,q)   | `φ_1..φ_p, ϑ_1..ϑ_q, σ²`            | `σ²/2π · |ϑ(e^{-iλ})|² / |φ(e^{-iλ})|²`       |
//! | ARFIMA(0,d,0) | `d, c`                            | `c · |1 - e^{-iλ}|^{-2d}`                     |
//! | ARFIMA(p,d,q) | `d, φ.., ϑ.., σ²`                 | `|1 - e^{-iλ}|^{-2d} · f_ARMA(λ)`             |
//! | fGn         | `H, σ²`                             | `σ² c_H |1 - e^{-iλ}|² Σ_k |λ + 2πk|^{-2H-1}` |
//!
//! The ARFIMA(0,d,0) density carries no `1/2π` factor; with `c = 1` it is the classical
//! `(2 sin(λ/2))^{-2d}`, which corresponds to innovations of variance `2πc`. The fGn constant
//! `c_H = sin(πH) Γ(2H+1) / 2π` makes `∫ f = σ²`, i.e. unit variance at `σ² = 1`.

use crate::error::{Error, Result};
use crate::rng::{stream_rng, StreamRng};
use crate::spectrum::fft_in_place;
use crate::EvenSpectralFunction;
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::Serialize;
use statrs::function::gamma::{gamma, ln_gamma};
use std::f64::consts::PI;
use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex, OnceLock};

/// Truncation of the fGn aliasing sum; the remainder is added as an integral tail.
const FGN_TERMS: i32 = 100;
/// Relative tail energy allowed when truncating the fractional MA(∞) filter.
const MA_TAIL_ENERGY: f64 = 1e-8;
/// Hard cap on the MA truncation length for non-Gaussian fractional simulation.
const MA_TRUNCATION_CAP: usize = 1 << 18;
const COVARIANCE_LAG_GUARD: i64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Family {
    WhiteNoise,
    Ar1,
    Arma { p: usize, q: usize },
    Arfima0d0,
    ArfimaPdq { p: usize, q: usize },
    Fgn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MemoryClass {
    Short,
    Long,
    Intermediate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralModel {
    family: Family,
    theta: Vec<f64>,
}

fn poly_at(coeffs: &[f64], sign: f64, z: Complex64) -> Complex64 {
    // 1 + sign * Σ c_k z^k
    let mut acc = Complex64::new(1.0, 0.0);
    let mut zk = Complex64::new(1.0, 0.0);
    for &c in coeffs {
        zk *= z;
        acc += sign * c * zk;
    }
    acc
}

/// Spectral radius of the companion matrix of `z^p - c_1 z^{p-1} - ... - c_p`, i.e. the
/// largest inverse root modulus of `1 - Σ c_k z^k`.
fn inverse_root_radius(coeffs: &[f64]) -> f64 {
    let p = coeffs.len();
    if p == 0 {
        return 0.0;
    }
    let mut m = DMatrix::<f64>::zeros(p, p);
    for (j, &c) in coeffs.iter().enumerate() {
        m[(0, j)] = c;
    }
    for i in 1..p {
        m[(i, i - 1)] = 1.0;
    }
    m.complex_eigenvalues()
        .iter()
        .map(|e| e.norm())
        .fold(0.0, f64::max)
}

fn two_sin_half(lambda: f64) -> f64 {
    2.0 * (0.5 * lambda).sin().abs()
}

impl SpectralModel {
    pub fn new(family: Family, theta: Vec<f64>) -> Result<Self> {
        let model = SpectralModel { family, theta };
        model.validate()?;
        Ok(model)
    }

    pub fn white_noise(sigma2: f64) -> Result<Self> {
        Self::new(Family::WhiteNoise, vec![sigma2])
    }

    pub fn ar1(theta: f64, sigma2: f64) -> Result<Self> {
        Self::new(Family::Ar1, vec![theta, sigma2])
    }

    pub fn arma(ar: &[f64], ma: &[f64], sigma2: f64) -> Result<Self> {
        let mut theta = ar.to_vec();
        theta.extend_from_slice(ma);
        theta.push(sigma2);
        Self::new(
            Family::Arma {
                p: ar.len(),
                q: ma.len(),
            },
            theta,
        )
    }

    /// `(2 sin(λ/2))^{-2d}`, unit scale.
    pub fn arfima0d0(d: f64) -> Result<Self> {
        Self::new(Family::Arfima0d0, vec![d, 1.0])
    }

    pub fn arfima0d0_scaled(d: f64, scale: f64) -> Result<Self> {
        Self::new(Family::Arfima0d0, vec![d, scale])
    }

    pub fn arfima(d: f64, ar: &[f64], ma: &[f64], sigma2: f64) -> Result<Self> {
        let mut theta = vec![d];
        theta.extend_from_slice(ar);
        theta.extend_from_slice(ma);
        theta.push(sigma2);
        Self::new(
            Family::ArfimaPdq {
                p: ar.len(),
                q: ma.len(),
            },
            theta,
        )
    }

    pub fn fgn(hurst: f64, sigma2: f64) -> Result<Self> {
        Self::new(Family::Fgn, vec![hurst, sigma2])
    }

    /// Ornstein–Uhlenbeck process with covariance `σ² e^{-α|t|}` sampled at spacing `Δ`:
    /// exactly an AR(1) with `θ = e^{-αΔ}` and innovation variance `σ²(1 - θ²)`.
    pub fn ornstein_uhlenbeck(alpha: f64, delta: f64, sigma2: f64) -> Result<Self> {
        if !(alpha > 0.0 && delta > 0.0) {
            return Err(Error::Domain(format!(
                "OU requires alpha > 0 and delta > 0, got alpha = {alpha}, delta = {delta}"
            )));
        }
        let theta = (-alpha * delta).exp();
        Self::ar1(theta, sigma2 * (1.0 - theta * theta))
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    pub fn scale_index(&self) -> usize {
        self.theta.len() - 1
    }

    pub fn scale(&self) -> f64 {
        self.theta[self.scale_index()]
    }

    pub fn with_theta(&self, theta: Vec<f64>) -> Result<Self> {
        Self::new(self.family, theta)
    }

    pub fn with_scale(&self, scale: f64) -> Result<Self> {
        let mut theta = self.theta.clone();
        let i = self.scale_index();
        theta[i] = scale;
        self.with_theta(theta)
    }

    fn expected_len(&self) -> usize {
        match self.family {
            Family::WhiteNoise => 1,
            Family::Ar1 | Family::Arfima0d0 | Family::Fgn => 2,
            Family::Arma { p, q } => p + q + 1,
            Family::ArfimaPdq { p, q } => p + q + 2,
        }
    }

    pub fn param_names(&self) -> Vec<String> {
        match self.family {
            Family::WhiteNoise => vec!["sigma2".into()],
            Family::Ar1 => vec!["theta".into(), "sigma2".into()],
            Family::Arma { p, q } => (1..=p)
                .map(|k| format!("ar{k}"))
                .chain((1..=q).map(|k| format!("ma{k}")))
                .chain(std::iter::once("sigma2".into()))
                .collect(),
            Family::Arfima0d0 => vec!["d".into(), "scale".into()],
            Family::ArfimaPdq { p, q } => std::iter::once("d".to_string())
                .chain((1..=p).map(|k| format!("ar{k}")))
                .chain((1..=q).map(|k| format!("ma{k}")))
                .chain(std::iter::once("sigma2".into()))
                .collect(),
            Family::Fgn => vec!["H".into(), "sigma2".into()],
        }
    }

    /// Compact box `Θ` used by the optimizer, one `(lo, hi)` per parameter.
    pub fn bounds(&self) -> Vec<(f64, f64)> {
        const COEF: (f64, f64) = (-0.99, 0.99);
        const SCALE: (f64, f64) = (1e-8, 1e8);
        match self.family {
            Family::WhiteNoise => vec![SCALE],
            Family::Ar1 => vec![COEF, SCALE],
            Family::Arma { p, q } => std::iter::repeat_n(COEF, p + q)
                .chain(std::iter::once(SCALE))
                .collect(),
            Family::Arfima0d0 => vec![(-0.49, 0.49), SCALE],
            Family::ArfimaPdq { p, q } => std::iter::once((-0.49, 0.49))
                .chain(std::iter::repeat_n(COEF, p + q))
                .chain(std::iter::once(SCALE))
                .collect(),
            Family::Fgn => vec![(0.01, 0.99), SCALE],
        }
    }

    pub(crate) fn ar_ma(&self) -> (&[f64], &[f64]) {
        match self.family {
            Family::Ar1 => (&self.theta[0..1], &[]),
            Family::Arma { p, q } => (&self.theta[..p], &self.theta[p..p + q]),
            Family::ArfimaPdq { p, q } => (&self.theta[1..1 + p], &self.theta[1 + p..1 + p + q]),
            _ => (&[], &[]),
        }
    }

    fn memory_parameter(&self) -> Option<f64> {
        match self.family {
            Family::Arfima0d0 | Family::ArfimaPdq { .. } => Some(self.theta[0]),
            Family::Fgn => Some(self.theta[0] - 0.5),
            _ => None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.theta.len() != self.expected_len() {
            return Err(Error::Domain(format!(
                "{:?} expects {} parameters, got {}",
                self.family,
                self.expected_len(),
                self.theta.len()
            )));
        }
        if self.theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite parameter in {:?}", self.theta)));
        }
        if self.scale() <= 0.0 {
            return Err(Error::Domain(format!("scale must be positive, got {}", self.scale())));
        }
        match self.family {
            Family::Arfima0d0 | Family::ArfimaPdq { .. } => {
                let d = self.theta[0];
                if !(d > -1.0 && d < 0.5) {
                    return Err(Error::Domain(format!("ARFIMA requires -1 < d < 1/2, got {d}")));
                }
            }
            Family::Fgn => {
                let h = self.theta[0];
                if !(h > 0.0 && h < 1.0) {
                    return Err(Error::Domain(format!("fGn requires 0 < H < 1, got {h}")));
                }
            }
            _ => {}
        }
        let (ar, ma) = self.ar_ma();
        if !ar.is_empty() && inverse_root_radius(ar) >= 1.0 {
            return Err(Error::Domain(format!("AR polynomial {ar:?} is not stationary")));
        }
        let neg_ma: Vec<f64> = ma.iter().map(|c| -c).collect();
        if !ma.is_empty() && inverse_root_radius(&neg_ma) >= 1.0 {
            return Err(Error::Domain(format!("MA polynomial {ma:?} is not invertible")));
        }
        Ok(())
    }

    pub fn memory_class(&self) -> MemoryClass {
        match self.memory_parameter() {
            Some(d) if d > 0.0 => MemoryClass::Long,
            Some(d) if d < 0.0 => MemoryClass::Intermediate,
            _ => MemoryClass::Short,
        }
    }

    /// Fractional families have `ln f` singular at zero whatever the sign of `d`.
    pub fn is_fractional(&self) -> bool {
        matches!(
            self.family,
            Family::Arfima0d0 | Family::ArfimaPdq { .. } | Family::Fgn
        )
    }

    fn arma_ratio(ar: &[f64], ma: &[f64], lambda: f64) -> f64 {
        let z = Complex64::from_polar(1.0, -lambda);
        poly_at(ma, 1.0, z).norm_sqr() / poly_at(ar, -1.0, z).norm_sqr()
    }

    fn fgn_shape(hurst: f64, lambda: f64) -> f64 {
        let a = 2.0 * hurst + 1.0;
        let lam = lambda.abs();
        let mut sum = 0.0;
        for k in -FGN_TERMS..=FGN_TERMS {
            sum += (lam + 2.0 * PI * k as f64).abs().powf(-a);
        }
        let edge = 2.0 * PI * (FGN_TERMS as f64 + 0.5);
        sum += ((edge + lam).powf(1.0 - a) + (edge - lam).powf(1.0 - a)) / (2.0 * PI * (a - 1.0));
        let c = (PI * hurst).sin() * gamma(2.0 * hurst + 1.0) / (2.0 * PI);
        c * two_sin_half(lam).powi(2) * sum
    }

    /// Density at unit scale.
    pub fn shape_density(&self, lambda: f64) -> f64 {
        let (ar, ma) = self.ar_ma();
        match self.family {
            Family::WhiteNoise => 1.0 / (2.0 * PI),
            Family::Ar1 | Family::Arma { .. } => Self::arma_ratio(ar, ma, lambda) / (2.0 * PI),
            Family::Arfima0d0 => two_sin_half(lambda).powf(-2.0 * self.theta[0]),
            Family::ArfimaPdq { .. } => {
                two_sin_half(lambda).powf(-2.0 * self.theta[0]) * Self::arma_ratio(ar, ma, lambda)
                    / (2.0 * PI)
            }
            Family::Fgn => {
                if lambda == 0.0 {
                    return match self.theta[0] {
                        h if h > 0.5 => f64::INFINITY,
                        h if h < 0.5 => 0.0,
                        _ => 1.0 / (2.0 * PI),
                    };
                }
                Self::fgn_shape(self.theta[0], lambda)
            }
        }
    }

    /// `f(λ, θ)`; `+∞` at a pole.
    pub fn density(&self, lambda: f64) -> f64 {
        self.scale() * self.shape_density(lambda)
    }

    pub fn ln_density(&self, lambda: f64) -> f64 {
        self.density(lambda).ln()
    }

    /// `∂/∂θ_k ln f(λ, θ)` for every parameter, scale last.
    pub fn score(&self, lambda: f64) -> Result<Vec<f64>> {
        if self.is_fractional() && lambda.rem_euclid(2.0 * PI) == 0.0 {
            return Err(Error::Pole(lambda));
        }
        let z = Complex64::from_polar(1.0, -lambda);
        let arma_scores = |ar: &[f64], ma: &[f64], out: &mut Vec<f64>| {
            let a = poly_at(ar, -1.0, z);
            let m = poly_at(ma, 1.0, z);
            let mut zk = Complex64::new(1.0, 0.0);
            for _ in ar {
                zk *= z;
                out.push(2.0 * (zk / a).re);
            }
            let mut zk = Complex64::new(1.0, 0.0);
            for _ in ma {
                zk *= z;
                out.push(2.0 * (zk / m).re);
            }
        };
        let mut out = Vec::with_capacity(self.dim());
        let (ar, ma) = self.ar_ma();
        match self.family {
            Family::WhiteNoise => {}
            Family::Ar1 => {
                let th = self.theta[0];
                let c = lambda.cos();
                out.push(2.0 * (c - th) / (1.0 - 2.0 * th * c + th * th));
            }
            Family::Arma { .. } => arma_scores(ar, ma, &mut out),
            Family::Arfima0d0 => out.push(-2.0 * two_sin_half(lambda).ln()),
            Family::ArfimaPdq { .. } => {
                out.push(-2.0 * two_sin_half(lambda).ln());
                arma_scores(ar, ma, &mut out);
            }
            Family::Fgn => {
                let h = self.theta[0];
                let step = 1e-6_f64.min(0.5 * h.min(1.0 - h));
                let up = Self::fgn_shape(h + step, lambda).ln();
                let down = Self::fgn_shape(h - step, lambda).ln();
                out.push((up - down) / (2.0 * step));
            }
        }
        out.push(1.0 / self.scale());
        Ok(out)
    }

    /// MA(∞) weights of the ARMA part, `ψ_0 = 1`, until they are negligible.
    fn arma_psi_weights(ar: &[f64], ma: &[f64]) -> Vec<f64> {
        let mut psi = vec![1.0];
        let mut quiet = 0;
        for j in 1..2_000_000usize {
            let mut v = if j <= ma.len() { ma[j - 1] } else { 0.0 };
            for (k, &phi) in ar.iter().enumerate() {
                if j > k {
                    v += phi * psi[j - k - 1];
                }
            }
            psi.push(v);
            if v.abs() < 1e-17 {
                quiet += 1;
                if quiet > ar.len().max(1) + ma.len() {
                    break;
                }
            } else {
                quiet = 0;
            }
        }
        psi
    }

    /// `r(u) = ∫ e^{iλu} f(λ) dλ`, closed form where available.
    pub fn covariance(&self, lag: i64) -> Result<f64> {
        let u = lag.abs();
        if u > COVARIANCE_LAG_GUARD {
            return Err(Error::Size {
                what: "covariance lag",
                size: u as usize,
                limit: COVARIANCE_LAG_GUARD as usize,
            });
        }
        let s = self.scale();
        match self.family {
            Family::WhiteNoise => Ok(if u == 0 { s } else { 0.0 }),
            Family::Ar1 => {
                let th = self.theta[0];
                Ok(s * th.powi(u as i32) / (1.0 - th * th))
            }
            Family::Arma { .. } => {
                let (ar, ma) = self.ar_ma();
                let psi = Self::arma_psi_weights(ar, ma);
                let u = u as usize;
                if u >= psi.len() {
                    return Ok(0.0);
                }
                Ok(s * psi.iter().zip(&psi[u..]).map(|(a, b)| a * b).sum::<f64>())
            }
            Family::Arfima0d0 => Ok(s * arfima_covariances(self.theta[0], u as usize)[u as usize]),
            Family::Fgn => {
                let h2 = 2.0 * self.theta[0];
                let u = u as f64;
                Ok(0.5 * s * ((u + 1.0).powf(h2) - 2.0 * u.powf(h2) + (u - 1.0).abs().powf(h2)))
            }
            Family::ArfimaPdq { .. } => self.covariance_by_quadrature(lag),
        }
    }

    /// `r(u)` by direct quadrature of `cos(uλ) f(λ)`; the oracle for the closed forms.
    pub fn covariance_by_quadrature(&self, lag: i64) -> Result<f64> {
        let u = lag.abs() as f64;
        let opts = crate::quad::SpectralQuad {
            singular_at_zero: self.is_fractional(),
            breakpoints: vec![],
            oscillation: u,
        };
        crate::quad::spectral_integral(&|l: f64| (u * l).cos() * self.density(l), &opts)
    }

    /// Burn-in length for recursive ARMA filtering: `max(500, 50 / (1 - ρ))` where `ρ` is
    /// the largest inverse AR root modulus.
    fn burn_in(&self) -> usize {
        let (ar, _) = self.ar_ma();
        let rho = inverse_root_radius(ar);
        ((50.0 / (1.0 - rho)).ceil() as usize).max(500)
    }

    pub fn spec_string(&self) -> String {
        self.to_string()
    }

    /// Parses `family{key=value,...}`, e.g. `ar1{theta=0.5,sigma2=1}`, `arfima{d=0.3}`,
    /// `fgn{H=0.7}`, `arma{ar=0.5:-0.2,ma=0.3}`, `ou{alpha=0.5,delta=1}`.
    pub fn parse(spec: &str) -> Result<Self> {
        let bad = |reason: String| Error::ModelSpec {
            spec: spec.to_string(),
            reason,
        };
        let spec_trim = spec.trim();
        let (name, body) = match spec_trim.find('{') {
            Some(i) => {
                if !spec_trim.ends_with('}') {
                    return Err(bad("missing closing `}`".into()));
                }
                (&spec_trim[..i], &spec_trim[i + 1..spec_trim.len() - 1])
            }
            None => (spec_trim, ""),
        };
        let mut params: Vec<(String, String)> = Vec::new();
        for item in body.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| bad(format!("expected key=value, got `{item}`")))?;
            params.push((k.trim().to_string(), v.trim().to_string()));
        }
        let mut take = |key: &str| -> Option<String> {
            params
                .iter()
                .position(|(k, _)| k == key)
                .map(|i| params.remove(i).1)
        };
        let num = |key: &str, v: Option<String>, default: Option<f64>| -> Result<f64> {
            match v {
                Some(s) => s
                    .parse::<f64>()
                    .map_err(|_| bad(format!("`{key}` is not a number: `{s}`"))),
                None => default.ok_or_else(|| bad(format!("missing parameter `{key}`"))),
            }
        };
        let list = |key: &str, v: Option<String>| -> Result<Vec<f64>> {
            match v {
                None => Ok(vec![]),
                Some(s) => s
                    .split(':')
                    .filter(|x| !x.trim().is_empty())
                    .map(|x| {
                        x.trim()
                            .parse::<f64>()
                            .map_err(|_| bad(format!("`{key}` entry is not a number: `{x}`")))
                    })
                    .collect(),
            }
        };
        let model = match name {
            "wn" | "white_noise" | "white" => {
                let s = num("sigma2", take("sigma2"), Some(1.0))?;
                Self::white_noise(s)
            }
            "ar1" => {
                let th = num("theta", take("theta"), None)?;
                let s = num("sigma2", take("sigma2"), Some(1.0))?;
                Self::ar1(th, s)
            }
            "arma" => {
                let ar = list("ar", take("ar"))?;
                let ma = list("ma", take("ma"))?;
                let s = num("sigma2", take("sigma2"), Some(1.0))?;
                Self::arma(&ar, &ma, s)
            }
            "arfima" | "arfima0d0" => {
                let d = num("d", take("d"), None)?;
                let ar = list("ar", take("ar"))?;
                let ma = list("ma", take("ma"))?;
                let sigma2 = take("sigma2");
                if name == "arfima0d0" || (ar.is_empty() && ma.is_empty() && sigma2.is_none()) {
                    let c = num("scale", take("scale"), Some(1.0))?;
                    Self::arfima0d0_scaled(d, c)
                } else {
                    let s = num("sigma2", sigma2, Some(1.0))?;
                    Self::arfima(d, &ar, &ma, s)
                }
            }
            "fgn" => {
                let h = num("H", take("H"), None)?;
                let s = num("sigma2", take("sigma2"), Some(1.0))?;
                Self::fgn(h, s)
            }
            "ou" => {
                let a = num("alpha", take("alpha"), None)?;
                let dt = num("delta", take("delta"), Some(1.0))?;
                let s = num("sigma2", take("sigma2"), Some(1.0))?;
                Self::ornstein_uhlenbeck(a, dt, s)
            }
            other => return Err(bad(format!("unknown family `{other}`"))),
        }
        .map_err(|e| bad(e.to_string()))?;
        if let Some((k, _)) = params.first() {
            return Err(bad(format!("unknown parameter `{k}`")));
        }
        Ok(model)
    }

    /// Seeded simulation of `X(1..T)` on stream 0 of `seed`.
    pub fn simulate(&self, driver: NoiseDriver, len: usize, seed: u64) -> Result<TimeSeries> {
        self.simulate_stream(driver, len, seed, 0)
    }

    /// Seeded simulation on an explicit `(seed, stream)` pair; replications use the
    /// replication index as the stream.
    pub fn simulate_stream(
        &self,
        driver: NoiseDriver,
        len: usize,
        seed: u64,
        stream: u64,
    ) -> Result<TimeSeries> {
        if len < 2 {
            return Err(Error::Domain(format!("series length must be at least 2, got {len}")));
        }
        let mut rng = stream_rng(seed, stream);
        let mut provenance = Provenance {
            model: self.to_string(),
            driver: driver.name().to_string(),
            seed,
            stream,
            method: String::new(),
            truncation: None,
            tail_energy: None,
            clipped_mass: None,
            trend: None,
        };
        let values = match self.family {
            Family::WhiteNoise => {
                provenance.method = "iid".into();
                let sd = self.scale().sqrt();
                (0..len).map(|_| sd * driver.sample(&mut rng)).collect()
            }
            Family::Ar1 | Family::Arma { .. } => {
                let burn = self.burn_in();
                provenance.method = "recursion".into();
                provenance.truncation = Some(burn);
                let sd = self.scale().sqrt();
                let innovations: Vec<f64> =
                    (0..len + burn).map(|_| sd * driver.sample(&mut rng)).collect();
                let (ar, ma) = self.ar_ma();
                let mut out = arma_filter(ar, ma, &innovations);
                out.drain(..burn);
                out
            }
            Family::Arfima0d0 => {
                let d = self.theta[0];
                let innovation_var = 2.0 * PI * self.scale();
                fractional_noise(d, innovation_var, len, driver, &mut rng, &mut provenance)?
            }
            Family::ArfimaPdq { .. } => {
                let d = self.theta[0];
                let burn = self.burn_in();
                let u = fractional_noise(d, self.scale(), len + burn, driver, &mut rng, &mut provenance)?;
                let (ar, ma) = self.ar_ma();
                let mut out = arma_filter(ar, ma, &u);
                out.drain(..burn);
                provenance.method = format!("{}+arma(burn={burn})", provenance.method);
                out
            }
            Family::Fgn => {
                if driver != NoiseDriver::Gaussian {
                    return Err(Error::Unsupported(format!(
                        "fGn supports the gaussian driver only, got {}",
                        driver.name()
                    )));
                }
                let cov: Vec<f64> = (0..=len as i64)
                    .map(|u| self.covariance(u))
                    .collect::<Result<_>>()?;
                let (x, clipped) = circulant_gaussian(|u| cov_extend(&cov, u, self), len, &mut rng)?;
                provenance.method = "circulant".into();
                provenance.clipped_mass = Some(clipped);
                x
            }
        };
        Ok(TimeSeries { values, provenance })
    }
}

fn cov_extend(cov: &[f64], u: usize, model: &SpectralModel) -> f64 {
    if u < cov.len() {
        cov[u]
    } else {
        model.covariance(u as i64).unwrap_or(0.0)
    }
}

/// `r(0..=max_lag)` of ARFIMA(0,d,0) with unit-variance innovations scaled to the density
/// `(2 sin(λ/2))^{-2d}`, i.e. `r(0) = 2π Γ(1-2d) / Γ(1-d)²`.
pub(crate) fn arfima_covariances(d: f64, max_lag: usize) -> Vec<f64> {
    let r0 = 2.0 * PI * (ln_gamma(1.0 - 2.0 * d) - 2.0 * ln_gamma(1.0 - d)).exp();
    let mut out = Vec::with_capacity(max_lag + 1);
    out.push(r0);
    for k in 1..=max_lag {
        let prev = out[k - 1];
        out.push(prev * (k as f64 - 1.0 + d) / (k as f64 - d));
    }
    out
}

/// Recursive ARMA filter `X_t = Σ φ_k X_{t-k} + e_t + Σ ϑ_k e_{t-k}` from a zero state.
fn arma_filter(ar: &[f64], ma: &[f64], e: &[f64]) -> Vec<f64> {
    let mut x = vec![0.0; e.len()];
    for t in 0..e.len() {
        let mut v = e[t];
        for (k, &c) in ma.iter().enumerate() {
            if t > k {
                v += c * e[t - k - 1];
            }
        }
        for (k, &c) in ar.iter().enumerate() {
            if t > k {
                v += c * x[t - k - 1];
            }
        }
        x[t] = v;
    }
    x
}

struct FractionalFilter {
    truncation: usize,
    tail_energy: f64,
    /// FFT of the zero-padded weights `ψ_0..ψ_K`.
    spectrum: Vec<Complex64>,
}

/// Truncated MA(∞) weights of `(1 - B)^{-d}`, transformed once per `(d, FFT size)`.
fn fractional_filter(d: f64, len: usize) -> Arc<FractionalFilter> {
    static CACHE: OnceLock<Mutex<HashMap<(u64, usize), Arc<FractionalFilter>>>> = OnceLock::new();
    let total = (ln_gamma(1.0 - 2.0 * d) - 2.0 * ln_gamma(1.0 - d)).exp();
    let mut psi = vec![1.0];
    let mut energy = 1.0;
    while (total - energy) > MA_TAIL_ENERGY * total && psi.len() < MA_TRUNCATION_CAP + 1 {
        let k = psi.len() as f64;
        let next = psi[psi.len() - 1] * (k - 1.0 + d) / k;
        energy += next * next;
        psi.push(next);
    }
    let trunc = psi.len() - 1;
    // Outputs at indices ≥ K never wrap around, so length len + K suffices.
    let n = (len + trunc).next_power_of_two();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(hit) = cache.lock().expect("filter cache").get(&(d.to_bits(), n)) {
        return hit.clone();
    }
    let mut spectrum: Vec<Complex64> = psi.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    spectrum.resize(n, Complex64::new(0.0, 0.0));
    fft_in_place(&mut spectrum, false);
    let filter = Arc::new(FractionalFilter {
        truncation: trunc,
        tail_energy: ((total - energy) / total).max(0.0),
        spectrum,
    });
    cache
        .lock()
        .expect("filter cache")
        .insert((d.to_bits(), n), filter.clone());
    filter
}

/// Fractional noise `(1 - B)^{-d} e_t` with `Var e_t = innovation_var`.
///
/// Gaussian drivers use exact circulant embedding of the closed-form covariance.
/// Other drivers use the truncated MA(∞) representation with weights
/// `ψ_k = ψ_{k-1} (k - 1 + d) / k`; the truncation point is the first `K` whose discarded
/// tail energy is below `1e-8` of the total, capped at `2^18` terms. The realized tail
/// energy fraction is recorded in the provenance.
fn fractional_noise(
    d: f64,
    innovation_var: f64,
    len: usize,
    driver: NoiseDriver,
    rng: &mut StreamRng,
    provenance: &mut Provenance,
) -> Result<Vec<f64>> {
    if driver == NoiseDriver::Gaussian {
        let unit = arfima_covariances(d, 2 * len.next_power_of_two() + 2);
        let scale = innovation_var / (2.0 * PI);
        let (x, clipped) = circulant_gaussian(
            |u| {
                if u < unit.len() {
                    scale * unit[u]
                } else {
                    0.0
                }
            },
            len,
            rng,
        )?;
        provenance.method = "circulant".into();
        provenance.clipped_mass = Some(clipped);
        return Ok(x);
    }

    let filter = fractional_filter(d, len);
    let trunc = filter.truncation;
    provenance.method = "truncated_ma".into();
    provenance.truncation = Some(trunc);
    provenance.tail_energy = Some(filter.tail_energy);

    let sd = innovation_var.sqrt();
    let n = filter.spectrum.len();
    let mut a: Vec<Complex64> = (0..len + trunc)
        .map(|_| Complex64::new(sd * driver.sample(rng), 0.0))
        .collect();
    a.resize(n, Complex64::new(0.0, 0.0));
    fft_in_place(&mut a, false);
    for (x, y) in a.iter_mut().zip(filter.spectrum.iter()) {
        *x *= y;
    }
    fft_in_place(&mut a, true);
    Ok((0..len).map(|t| a[t + trunc].re / n as f64).collect())
}

/// Exact Gaussian sample with covariance `cov(0..)` by circulant embedding
/// (Davies–Harte). Negative embedding eigenvalues are clipped to zero; the clipped
/// fraction of total eigenvalue mass is returned.
pub(crate) fn circulant_gaussian<C: Fn(usize) -> f64>(
    cov: C,
    len: usize,
    rng: &mut StreamRng,
) -> Result<(Vec<f64>, f64)> {
    let m = (2 * (len - 1)).next_power_of_two().max(2);
    let half = m / 2;
    let mut c: Vec<Complex64> = (0..m)
        .map(|j| {
            let lag = if j <= half { j } else { m - j };
            Complex64::new(cov(lag), 0.0)
        })
        .collect();
    fft_in_place(&mut c, false);
    let mut clipped = 0.0;
    let mut mass = 0.0;
    let eig: Vec<f64> = c
        .iter()
        .map(|z| {
            mass += z.re.abs();
            if z.re < 0.0 {
                clipped += -z.re;
                0.0
            } else {
                z.re
            }
        })
        .collect();
    if !(mass > 0.0) {
        return Err(Error::Domain("circulant embedding has zero mass".into()));
    }
    let mut w: Vec<Complex64> = eig
        .iter()
        .map(|&l| {
            let s = (l / m as f64).sqrt();
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            Complex64::new(s * re, s * im)
        })
        .collect();
    fft_in_place(&mut w, false);
    Ok((w[..len].iter().map(|z| z.re).collect(), clipped / mass))
}

impl fmt::Display for SpectralModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(":");
        let (ar, ma) = self.ar_ma();
        match self.family {
            Family::WhiteNoise => write!(f, "wn{{sigma2={}}}", self.scale()),
            Family::Ar1 => write!(f, "ar1{{theta={},sigma2={}}}", self.theta[0], self.scale()),
            Family::Arma { .. } => write!(
                f,
                "arma{{ar={},ma={},sigma2={}}}",
                join(ar),
                join(ma),
                self.scale()
            ),
            Family::Arfima0d0 => write!(f, "arfima{{d={},scale={}}}", self.theta[0], self.scale()),
            Family::ArfimaPdq { .. } => write!(
                f,
                "arfima{{d={},ar={},ma={},sigma2={}}}",
                self.theta[0],
                join(ar),
                join(ma),
                self.scale()
            ),
            Family::Fgn => write!(f, "fgn{{H={},sigma2={}}}", self.theta[0], self.scale()),
        }
    }
}

impl EvenSpectralFunction for SpectralModel {
    fn value(&self, lambda: f64) -> f64 {
        self.density(lambda)
    }

    fn fourier_coefficient(&self, lag: i64) -> Result<f64> {
        self.covariance(lag)
    }

    fn singular_at_zero(&self) -> bool {
        self.is_fractional()
    }

    fn describe(&self) -> String {
        self.to_string()
    }
}

/// Unit-variance innovation distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum NoiseDriver {
    Gaussian,
    /// `Exp(1) - 1`.
    CenteredExponential,
    /// Laplace with scale `1/√2`.
    Laplace,
}

impl NoiseDriver {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "gaussian" | "normal" => Ok(NoiseDriver::Gaussian),
            "exp" | "exponential" | "centered_exponential" => Ok(NoiseDriver::CenteredExponential),
            "laplace" => Ok(NoiseDriver::Laplace),
            other => Err(Error::Config(format!(
                "unknown driver `{other}` (expected gaussian, exp or laplace)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            NoiseDriver::Gaussian => "gaussian",
            NoiseDriver::CenteredExponential => "exp",
            NoiseDriver::Laplace => "laplace",
        }
    }

    /// Fourth cumulant of the unit-variance driver.
    pub fn kappa4(&self) -> f64 {
        match self {
            NoiseDriver::Gaussian => 0.0,
            NoiseDriver::CenteredExponential => 6.0,
            NoiseDriver::Laplace => 3.0,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            NoiseDriver::Gaussian => StandardNormal.sample(rng),
            NoiseDriver::CenteredExponential => {
                let e: f64 = Exp1.sample(rng);
                e - 1.0
            }
            NoiseDriver::Laplace => {
                let u: f64 = rng.random::<f64>() - 0.5;
                let tail = (1.0 - 2.0 * u.abs()).max(f64::MIN_POSITIVE);
                -std::f64::consts::FRAC_1_SQRT_2 * u.signum() * tail.ln()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub model: String,
    pub driver: String,
    pub seed: u64,
    pub stream: u64,
    pub method: String,
    pub truncation: Option<usize>,
    pub tail_energy: Option<f64>,
    pub clipped_mass: Option<f64>,
    pub trend: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub values: Vec<f64>,
    pub provenance: Provenance,
}

impl TimeSeries {
    /// Wraps externally supplied data.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::Domain("series length must be at least 2".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("series contains non-finite values".into()));
        }
        Ok(TimeSeries {
            values,
            provenance: Provenance {
                model: "external".into(),
                driver: "external".into(),
                seed: 0,
                stream: 0,
                method: "external".into(),
                truncation: None,
                tail_energy: None,
                clipped_mass: None,
                trend: None,
            },
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::{tapered_periodogram, FrequencyGrid};
    use crate::taper::Taper;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn all_models() -> Vec<SpectralModel> {
        vec![
            SpectralModel::white_noise(1.3).unwrap(),
            SpectralModel::ar1(-0.6, 0.8).unwrap(),
            SpectralModel::arma(&[0.5, -0.3], &[0.4], 1.0).unwrap(),
            SpectralModel::arfima0d0(0.3).unwrap(),
            SpectralModel::arfima(-0.2, &[0.4], &[], 1.0).unwrap(),
            SpectralModel::fgn(0.7, 1.0).unwrap(),
        ]
    }

    #[test]
    fn density_examples() {
        let wn = SpectralModel::white_noise(1.0).unwrap();
        assert_abs_diff_eq!(wn.density(0.7), 1.0 / (2.0 * PI), epsilon = 1e-15);
        let fd = SpectralModel::arfima0d0(0.25).unwrap();
        assert_abs_diff_eq!(fd.density(PI), 2f64.powf(-0.5), epsilon = 1e-14);
        assert_eq!(fd.density(0.0), f64::INFINITY);
        let ar = SpectralModel::ar1(0.5, 1.0).unwrap();
        assert_abs_diff_eq!(ar.density(0.0), 2.0 / PI, epsilon = 1e-14);
    }

    #[test]
    fn parameters_outside_domain_are_rejected() {
        assert!(SpectralModel::ar1(1.0, 1.0).is_err());
        assert!(SpectralModel::arfima0d0(0.5).is_err());
        assert!(SpectralModel::fgn(1.0, 1.0).is_err());
        assert!(SpectralModel::white_noise(-1.0).is_err());
        assert!(SpectralModel::arma(&[1.2], &[], 1.0).is_err());
    }

    #[test]
    fn score_examples() {
        let ar = SpectralModel::ar1(0.0, 1.0).unwrap();
        let s = ar.score(0.9).unwrap();
        assert_abs_diff_eq!(s[0], 2.0 * 0.9f64.cos(), epsilon = 1e-14);
        let fd = SpectralModel::arfima0d0(0.2).unwrap();
        let l: f64 = 1.1;
        assert_abs_diff_eq!(fd.score(l).unwrap()[0], -2.0 * (2.0 * (l / 2.0).sin()).ln(), epsilon = 1e-14);
        assert!(matches!(fd.score(0.0), Err(Error::Pole(_))));
        let wn = SpectralModel::white_noise(2.0).unwrap();
        assert_eq!(wn.score(0.3).unwrap(), vec![0.5]);
    }

    #[test]
    fn score_matches_finite_differences() {
        for m in all_models() {
            for &l in &[0.3, 1.2, 2.9] {
                let s = m.score(l).unwrap();
                for k in 0..m.dim() {
                    let h = 1e-6;
                    let mut up = m.theta().to_vec();
                    let mut down = m.theta().to_vec();
                    up[k] += h;
                    down[k] -= h;
                    let fd = (m.with_theta(up).unwrap().ln_density(l)
                        - m.with_theta(down).unwrap().ln_density(l))
                        / (2.0 * h);
                    assert!((fd - s[k]).abs() < 1e-5 * (1.0 + fd.abs()), "{m} k={k} λ={l}: {fd} vs {}", s[k]);
                }
            }
        }
    }

    #[test]
    fn covariance_examples() {
        let wn = SpectralModel::white_noise(1.0).unwrap();
        assert_eq!(wn.covariance(0).unwrap(), 1.0);
        let ar = SpectralModel::ar1(0.5, 1.0).unwrap();
        assert_abs_diff_eq!(ar.covariance(2).unwrap(), 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(ar.covariance_by_quadrature(2).unwrap(), 1.0 / 3.0, epsilon = 1e-10);
        assert!(ar.covariance(2_000_000).is_err());
    }

    #[test]
    fn arfima_variance_two_oracles() {
        let m = SpectralModel::arfima0d0(0.2).unwrap();
        let closed = 2.0 * PI * gamma(1.0 - 0.4) / gamma(0.8).powi(2);
        assert_abs_diff_eq!(m.covariance(0).unwrap(), closed, epsilon = 1e-12);
        let quad = m.covariance_by_quadrature(0).unwrap();
        assert!((quad - closed).abs() < 1e-6, "{quad} vs {closed}");
        for u in [1, 5] {
            let q = m.covariance_by_quadrature(u).unwrap();
            assert!((q - m.covariance(u).unwrap()).abs() < 1e-6);
        }
    }

    #[test]
    fn spectral_covariance_consistency() {
        for m in all_models() {
            for u in [0, 1, 2, 5] {
                let a = m.covariance(u).unwrap();
                let b = m.covariance_by_quadrature(u).unwrap();
                assert!((a - b).abs() < 1e-6, "{m} lag {u}: {a} vs {b}");
            }
        }
        let fgn = SpectralModel::fgn(0.3, 2.0).unwrap();
        assert_abs_diff_eq!(fgn.covariance_by_quadrature(0).unwrap(), 2.0, epsilon = 1e-6);
    }

    #[test]
    fn memory_classes() {
        assert_eq!(SpectralModel::arfima0d0(0.3).unwrap().memory_class(), MemoryClass::Long);
        assert_eq!(SpectralModel::arfima0d0(-0.3).unwrap().memory_class(), MemoryClass::Intermediate);
        assert_eq!(SpectralModel::fgn(0.7, 1.0).unwrap().memory_class(), MemoryClass::Long);
        assert_eq!(SpectralModel::ar1(0.7, 1.0).unwrap().memory_class(), MemoryClass::Short);
    }

    #[test]
    fn parse_and_display_round_trip() {
        for spec in [
            "wn",
            "ar1{theta=0.5}",
            "ar1{theta=0.5,sigma2=2}",
            "arma{ar=0.5:-0.2,ma=0.3}",
            "arfima{d=0.3}",
            "arfima{d=0.2,ar=0.4}",
            "fgn{H=0.7}",
        ] {
            let m = SpectralModel::parse(spec).unwrap();
            assert_eq!(SpectralModel::parse(&m.to_string()).unwrap(), m, "{spec}");
        }
        let ou = SpectralModel::parse("ou{alpha=0.5,delta=2}").unwrap();
        assert_eq!(ou.family(), Family::Ar1);
        assert_abs_diff_eq!(ou.theta()[0], (-1.0f64).exp(), epsilon = 1e-15);
        assert!(SpectralModel::parse("ar1{theta=0.5,bogus=1}").is_err());
        assert!(SpectralModel::parse("ar1{theta=x}").is_err());
        assert!(SpectralModel::parse("garch{a=1}").is_err());
        assert!(SpectralModel::parse("ar1{theta=1.5}").is_err());
    }

    #[test]
    fn white_noise_draws_come_from_the_stream() {
        let wn = SpectralModel::white_noise(1.0).unwrap();
        let x = wn.simulate_stream(NoiseDriver::Gaussian, 4, 11, 3).unwrap();
        let mut rng = stream_rng(11, 3);
        let direct: Vec<f64> = (0..4).map(|_| StandardNormal.sample(&mut rng)).collect();
        assert_eq!(x.values, direct);
        assert_eq!(x.provenance.seed, 11);
        assert_eq!(x.provenance.stream, 3);
    }

    #[test]
    fn simulation_is_reproducible() {
        for m in all_models() {
            let a = m.simulate(NoiseDriver::Gaussian, 300, 5).unwrap();
            let b = m.simulate(NoiseDriver::Gaussian, 300, 5).unwrap();
            assert_eq!(a, b);
            let c = m.simulate(NoiseDriver::Gaussian, 300, 6).unwrap();
            assert_ne!(a.values, c.values);
            assert!(a.values.iter().all(|v| v.is_finite()));
        }
        let fgn = SpectralModel::fgn(0.7, 1.0).unwrap();
        assert!(matches!(
            fgn.simulate(NoiseDriver::Laplace, 100, 1),
            Err(Error::Unsupported(_))
        ));
        assert!(fgn.simulate(NoiseDriver::Gaussian, 1, 1).is_err());
    }

    #[test]
    fn ar1_lag_one_autocorrelation() {
        let m = SpectralModel::ar1(0.5, 1.0).unwrap();
        let x = m.simulate(NoiseDriver::Gaussian, 10_000, 2024).unwrap().values;
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        let c0: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
        let c1: f64 = x.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum();
        assert!((c1 / c0 - 0.5).abs() < 0.03, "{}", c1 / c0);
    }

    #[test]
    fn simulated_variance_matches_covariance() {
        let reps = 300;
        for (m, driver) in [
            (SpectralModel::arma(&[0.5, -0.3], &[0.4], 1.0).unwrap(), NoiseDriver::Laplace),
            (SpectralModel::fgn(0.7, 1.0).unwrap(), NoiseDriver::Gaussian),
            (SpectralModel::arfima0d0(0.2).unwrap(), NoiseDriver::Gaussian),
            (SpectralModel::arfima0d0(0.2).unwrap(), NoiseDriver::CenteredExponential),
            (SpectralModel::arfima(0.1, &[0.3], &[], 1.0).unwrap(), NoiseDriver::Gaussian),
        ] {
            let mut acc0 = 0.0;
            let mut acc1 = 0.0;
            for r in 0..reps {
                let x = m.simulate_stream(driver, 64, 77, r).unwrap().values;
                acc0 += x.iter().map(|v| v * v).sum::<f64>() / 64.0;
                acc1 += x.windows(2).map(|w| w[0] * w[1]).sum::<f64>() / 63.0;
            }
            let r0 = m.covariance(0).unwrap();
            let r1 = m.covariance(1).unwrap();
            assert!((acc0 / reps as f64 - r0).abs() < 0.06 * r0, "{m}: {} vs {r0}", acc0 / reps as f64);
            assert!((acc1 / reps as f64 - r1).abs() < 0.06 * r0, "{m}: {} vs {r1}", acc1 / reps as f64);
        }
    }

    #[test]
    fn arfima_log_periodogram_slope() {
        let m = SpectralModel::arfima0d0(0.3).unwrap();
        let len = 1 << 14;
        let grid = FrequencyGrid::canonical(len, 1).unwrap();
        let rect = Taper::rectangular();
        let reps = 20;
        let mut slope_sum = 0.0;
        for r in 0..reps {
            let x = m.simulate_stream(NoiseDriver::Gaussian, len, 314, r).unwrap().values;
            let p = tapered_periodogram(&x, &rect, &grid).unwrap();
            let (mut xs, mut ys) = (Vec::new(), Vec::new());
            for k in 1..=50 {
                let j = k - 1 + len / 2;
                xs.push(grid.points()[j].ln());
                ys.push(p.values()[j].ln());
            }
            let mx = xs.iter().sum::<f64>() / 50.0;
            let my = ys.iter().sum::<f64>() / 50.0;
            let sxy: f64 = xs.iter().zip(&ys).map(|(a, b)| (a - mx) * (b - my)).sum();
            let sxx: f64 = xs.iter().map(|a| (a - mx).powi(2)).sum();
            slope_sum += sxy / sxx;
        }
        let slope = slope_sum / reps as f64;
        assert!((slope + 0.6).abs() < 0.1, "{slope}");
    }

    #[test]
    fn truncated_ma_records_tail() {
        let m = SpectralModel::arfima0d0(0.3).unwrap();
        let x = m.simulate(NoiseDriver::Laplace, 50, 1).unwrap();
        assert_eq!(x.provenance.method, "truncated_ma");
        assert_eq!(x.provenance.truncation, Some(MA_TRUNCATION_CAP));
        assert!(x.provenance.tail_energy.unwrap() > 0.0);
        let m = SpectralModel::arfima0d0(-0.3).unwrap();
        let x = m.simulate(NoiseDriver::Laplace, 50, 1).unwrap();
        assert!(x.provenance.tail_energy.unwrap() <= MA_TAIL_ENERGY);
    }

    #[test]
    fn driver_cumulants() {
        let n = 1_000_000;
        for driver in [NoiseDriver::Gaussian, NoiseDriver::CenteredExponential, NoiseDriver::Laplace] {
            let mut rng = stream_rng(99, 0);
            let x: Vec<f64> = (0..n).map(|_| driver.sample(&mut rng)).collect();
            let mean = x.iter().sum::<f64>() / n as f64;
            let m2 = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
            let m4 = x.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n as f64;
            let k4 = m4 - 3.0 * m2 * m2;
            assert!(mean.abs() < 0.01, "{driver:?} mean {mean}");
            assert!((m2 - 1.0).abs() < 0.01, "{driver:?} var {m2}");
            let target = driver.kappa4();
            if target == 0.0 {
                assert!(k4.abs() < 0.05, "{driver:?} k4 {k4}");
            } else {
                assert!((k4 - target).abs() < 0.05 * target, "{driver:?} k4 {k4}");
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10))]
        #[test]
        fn densities_are_even_and_nonnegative(
            th in -0.95f64..0.95,
            d in -0.45f64..0.45,
            h in 0.05f64..0.95,
            s in 0.1f64..5.0,
        ) {
            let models = [
                SpectralModel::white_noise(s).unwrap(),
                SpectralModel::ar1(th, s).unwrap(),
                SpectralModel::arma(&[th * 0.5], &[0.3], s).unwrap(),
                SpectralModel::arfima0d0_scaled(d, s).unwrap(),
                SpectralModel::arfima(d, &[th * 0.5], &[], s).unwrap(),
                SpectralModel::fgn(h, s).unwrap(),
            ];
            for m in &models {
                for j in 1..=512 {
                    let l = PI * j as f64 / 512.0;
                    let a = m.density(l);
                    let b = m.density(-l);
                    prop_assert!(a >= 0.0);
                    prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
                }
            }
        }
    }
}
