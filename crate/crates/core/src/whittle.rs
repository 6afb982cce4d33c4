//! Tapered Whittle estimation.
//!
//! The objective is `(1/4π) Σ_j [ln f(λ_j, θ) + I(λ_j) / f(λ_j, θ)] w(λ_j) w_j`. The
//! multiplicative scale of `f` is profiled out in closed form, so the search runs over the
//! shape parameters only.

use crate::error::{Error, Result};
use crate::models::SpectralModel;
use crate::optim::{minimize, OptimConfig};
use crate::quad::{spectral_integral, SpectralQuad};
use crate::spectrum::{tapered_periodogram, FrequencyGrid, Periodogram};
use crate::taper::Taper;
use nalgebra::DMatrix;
use serde::Serialize;
use std::f64::consts::PI;

const DENSITY_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightFunction {
    /// `w ≡ 1`.
    Unit,
    /// `w(λ) = 1 / (1 + λ²)`.
    Lorentz,
}

impl WeightFunction {
    pub fn eval(&self, lambda: f64) -> f64 {
        match self {
            WeightFunction::Unit => 1.0,
            WeightFunction::Lorentz => 1.0 / (1.0 + lambda * lambda),
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "unit" | "one" => Ok(WeightFunction::Unit),
            "lorentz" => Ok(WeightFunction::Lorentz),
            other => Err(Error::Config(format!("unknown weight function `{other}`"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            WeightFunction::Unit => "unit",
            WeightFunction::Lorentz => "lorentz",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WhittleConfig {
    pub weight: WeightFunction,
    pub oversample: usize,
    pub optim: OptimConfig,
    /// Holds the scale at a known value instead of profiling it.
    pub fixed_scale: Option<f64>,
    /// Innovation fourth cumulant used for the asymptotic covariance.
    pub kappa4: f64,
}

impl Default for WhittleConfig {
    fn default() -> Self {
        WhittleConfig {
            weight: WeightFunction::Unit,
            oversample: 4,
            optim: OptimConfig::default(),
            fixed_scale: None,
            kappa4: 0.0,
        }
    }
}

/// `(1/4π) Σ [ln f + I/f] w(λ_j) w_j` at `model`'s parameters.
pub fn whittle_objective(pgram: &Periodogram, model: &SpectralModel, weight: WeightFunction) -> Result<f64> {
    let grid = pgram.grid();
    let mut acc = 0.0;
    for ((&l, &wj), &i) in grid.points().iter().zip(grid.weights()).zip(pgram.values()) {
        let f = model.density(l);
        if !(f > 0.0) || !f.is_finite() {
            return Err(Error::Objective(model.theta().to_vec()));
        }
        let f = f.max(DENSITY_FLOOR);
        acc += (f.ln() + i / f) * weight.eval(l) * wj;
    }
    Ok(acc / (4.0 * PI))
}

/// Closed-form minimizer of the objective over the scale: `Σ (I/k) u / Σ u` with `k` the
/// unit-scale density and `u_j = w(λ_j) w_j`.
fn profiled_scale(pgram: &Periodogram, shape: &SpectralModel, weight: WeightFunction) -> Result<f64> {
    let grid = pgram.grid();
    let (mut num, mut den) = (0.0, 0.0);
    for ((&l, &wj), &i) in grid.points().iter().zip(grid.weights()).zip(pgram.values()) {
        let k = shape.shape_density(l);
        if !(k > 0.0) || !k.is_finite() {
            return Err(Error::Objective(shape.theta().to_vec()));
        }
        let u = weight.eval(l) * wj;
        num += i / k * u;
        den += u;
    }
    Ok(num / den)
}

#[derive(Debug, Clone, PartialEq)]
pub struct InfoMatrices {
    pub params: Vec<String>,
    /// `(1/4π) ∫ ∇ln f ∇ln f' w`.
    pub w: DMatrix<f64>,
    /// `(1/4π) ∫ ∇ln f ∇ln f' w²`.
    pub a: DMatrix<f64>,
    /// `κ₄/(16π²) ∫ ∇ln f w ∫ ∇ln f' w`.
    pub b: DMatrix<f64>,
    /// `W⁻¹ (A + B) W⁻¹`.
    pub gamma: DMatrix<f64>,
}

/// Information matrices over the parameters listed in `free` (indices into `θ`).
pub fn info_matrices_for(
    model: &SpectralModel,
    free: &[usize],
    weight: WeightFunction,
    kappa4: f64,
) -> Result<InfoMatrices> {
    let p = free.len();
    let opts = SpectralQuad {
        singular_at_zero: model.is_fractional(),
        ..SpectralQuad::default()
    };
    let score = |l: f64| -> Option<Vec<f64>> {
        model.score(l).ok().map(|s| free.iter().map(|&k| s[k]).collect())
    };
    let integral = |f: &dyn Fn(&[f64], f64) -> f64| -> Result<f64> {
        spectral_integral(
            &|l: f64| match score(l) {
                Some(s) => f(&s, l),
                None => f64::NAN,
            },
            &opts,
        )
    };
    let mut w = DMatrix::zeros(p, p);
    let mut a = DMatrix::zeros(p, p);
    let mut lin = vec![0.0; p];
    for i in 0..p {
        lin[i] = integral(&|s, l| s[i] * weight.eval(l))?;
        for j in 0..=i {
            let wij = integral(&|s, l| s[i] * s[j] * weight.eval(l))? / (4.0 * PI);
            let aij = integral(&|s, l| s[i] * s[j] * weight.eval(l).powi(2))? / (4.0 * PI);
            w[(i, j)] = wij;
            w[(j, i)] = wij;
            a[(i, j)] = aij;
            a[(j, i)] = aij;
        }
    }
    let b = DMatrix::from_fn(p, p, |i, j| kappa4 / (16.0 * PI * PI) * lin[i] * lin[j]);
    let w_inv = w
        .clone()
        .try_inverse()
        .filter(|m| m.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::SingularInformation(format!("W is singular for {model}")))?;
    if w.clone().cholesky().is_none() {
        return Err(Error::SingularInformation(format!("W is not positive definite for {model}")));
    }
    let gamma = &w_inv * (&a + &b) * &w_inv;
    let names = model.param_names();
    Ok(InfoMatrices {
        params: free.iter().map(|&k| names[k].clone()).collect(),
        w,
        a,
        b,
        gamma: (&gamma + gamma.transpose()) * 0.5,
    })
}

/// Information matrices over all parameters of `model`, scale included.
pub fn info_matrices(model: &SpectralModel, weight: WeightFunction, kappa4: f64) -> Result<InfoMatrices> {
    let all: Vec<usize> = (0..model.dim()).collect();
    info_matrices_for(model, &all, weight, kappa4)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WhittleFit {
    pub params: Vec<String>,
    pub theta_hat: Vec<f64>,
    pub objective_value: f64,
    pub iterations: usize,
    pub converged: bool,
    /// `e(h) Γ(θ̂)` over the estimated parameters.
    pub asym_cov: Vec<Vec<f64>>,
    /// `sqrt(diag(asym_cov) / T)`.
    pub se: Vec<f64>,
}

impl WhittleFit {
    /// The fitted model; a scale held fixed during the fit is taken from `template`.
    pub fn model(&self, template: &SpectralModel) -> Result<SpectralModel> {
        let mut theta = self.theta_hat.clone();
        if theta.len() + 1 == template.dim() {
            theta.push(template.scale());
        }
        template.with_theta(theta)
    }
}

/// Periodogram grid for Whittle fitting: shifted for families with a singularity at zero.
pub fn whittle_grid(model: &SpectralModel, len: usize, oversample: usize) -> Result<FrequencyGrid> {
    if model.is_fractional() {
        FrequencyGrid::canonical_shifted(len, oversample)
    } else {
        FrequencyGrid::canonical(len, oversample)
    }
}

pub fn whittle_estimate(
    series: &[f64],
    taper: &Taper,
    template: &SpectralModel,
    cfg: &WhittleConfig,
) -> Result<WhittleFit> {
    let grid = whittle_grid(template, series.len(), cfg.oversample)?;
    let pgram = tapered_periodogram(series, taper, &grid)?;
    whittle_fit_periodogram(&pgram, taper, template, cfg)
}

/// Fits `template`'s family to a periodogram. `template` supplies the family and the
/// value of any fixed parameter.
pub fn whittle_fit_periodogram(
    pgram: &Periodogram,
    taper: &Taper,
    template: &SpectralModel,
    cfg: &WhittleConfig,
) -> Result<WhittleFit> {
    let dim = template.dim();
    let scale_idx = template.scale_index();
    let bounds = template.bounds();
    let shape_bounds = &bounds[..scale_idx];
    let fit_model = |shape: &[f64]| -> Result<SpectralModel> {
        let mut theta = shape.to_vec();
        theta.push(1.0);
        let unit = template.with_theta(theta)?;
        let scale = match cfg.fixed_scale {
            Some(s) => s,
            None => profiled_scale(pgram, &unit, cfg.weight)?,
        };
        unit.with_scale(scale)
    };
    let objective = |shape: &[f64]| -> f64 {
        match fit_model(shape).and_then(|m| whittle_objective(pgram, &m, cfg.weight)) {
            Ok(v) => v,
            Err(_) => f64::INFINITY,
        }
    };
    let res = minimize(objective, shape_bounds, &cfg.optim);
    if !res.value.is_finite() {
        return Err(Error::NonConvergence(format!(
            "Whittle objective is not finite anywhere on the search box for {template}"
        )));
    }
    let fitted = fit_model(&res.x)?;
    let free: Vec<usize> = if cfg.fixed_scale.is_some() {
        (0..scale_idx).collect()
    } else {
        (0..dim).collect()
    };
    let e = taper.tapering_factor()?;
    let (asym_cov, se) = match info_matrices_for(&fitted, &free, cfg.weight, cfg.kappa4) {
        Ok(info) => {
            let cov = &info.gamma * e;
            let t = pgram.sample_len() as f64;
            let se = (0..free.len()).map(|i| (cov[(i, i)].max(0.0) / t).sqrt()).collect();
            let rows = (0..free.len())
                .map(|i| (0..free.len()).map(|j| cov[(i, j)]).collect())
                .collect();
            (rows, se)
        }
        Err(_) => (vec![vec![f64::NAN; free.len()]; free.len()], vec![f64::NAN; free.len()]),
    };
    let names = template.param_names();
    Ok(WhittleFit {
        params: free.iter().map(|&k| names[k].clone()).collect(),
        theta_hat: free.iter().map(|&k| fitted.theta()[k]).collect(),
        objective_value: res.value,
        iterations: res.evaluations,
        converged: res.converged,
        asym_cov,
        se,
    })
}
