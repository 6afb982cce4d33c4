//! Goodness-of-fit tests for spectral hypotheses.
//!
//! The statistic is `S = ‖Φ‖²` with `Φ_j = √T/√(4π e(h)) Σ [I/f − 1] φ_j w` for an
//! orthonormal system `φ_1..φ_m`. Under a simple hypothesis `S` is `χ²_m`; when `f` is
//! fitted by tapered Whittle, it is a weighted sum of independent `χ²_1` variables.

use crate::error::{Error, Result};
use crate::models::{Family, SpectralModel};
use crate::quad::{spectral_integral, SpectralQuad};
use crate::rng::{stream_rng, INTERNAL_STREAM};
use crate::spectrum::{tapered_periodogram, Periodogram};
use crate::stats::{chi2_quantile, chi2_sf};
use crate::taper::Taper;
use crate::whittle::{info_matrices_for, whittle_fit_periodogram, whittle_grid, WhittleConfig};
use crate::EvenSpectralFunction;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;
use std::f64::consts::PI;

/// Monte Carlo draws used for mixture p-values.
pub const MIXTURE_DRAWS: usize = 200_000;
const MIXTURE_SEED: u64 = 0x6f66_5f6d_6978;
/// Eigenvalues this close to 0 or 1 count as exact when deciding whether the limit law is
/// a plain `χ²`.
const EXACT_TOL: f64 = 1e-6;
const GRAM_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
enum BasisKind {
    Cosine,
    /// `φ_j(λ) ∝ cos(jλ + 2 arg α(e^{-iλ}))` for `j > p`, `φ_j ≡ 0` for `j ≤ p`, where
    /// `α(z) = 1 − Σ a_k z^k` is the autoregressive polynomial.
    ArExample { ar: Vec<f64> },
}

/// A certified orthonormal system `φ_1..φ_m` on `[-π, π]`. Identically zero members are
/// allowed and excluded from the certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct TestBasis {
    kind: BasisKind,
    norms: Vec<f64>,
    gram_residual: f64,
}

impl TestBasis {
    /// `φ_j(λ) = cos(jλ)/√π`, `j = 1..m`.
    pub fn cosine(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::Config("basis needs at least one function".into()));
        }
        Self::certify(BasisKind::Cosine, vec![1.0 / PI.sqrt(); m])
    }

    /// Score-orthogonal basis for an autoregression with coefficients `ar`, normalized
    /// numerically.
    pub fn ar_example(m: usize, ar: &[f64]) -> Result<Self> {
        if m <= ar.len() {
            return Err(Error::Config(format!(
                "AR-example basis needs m > p (m = {m}, p = {})",
                ar.len()
            )));
        }
        let kind = BasisKind::ArExample { ar: ar.to_vec() };
        let raw = TestBasis {
            kind: kind.clone(),
            norms: vec![1.0; m],
            gram_residual: 0.0,
        };
        let opts = SpectralQuad::smooth().with_oscillation(m as f64);
        let mut norms = vec![0.0; m];
        for (j, n) in norms.iter_mut().enumerate().skip(ar.len()) {
            let energy = spectral_integral(&|l: f64| raw.eval(j, l).powi(2), &opts)?;
            *n = 1.0 / energy.sqrt();
        }
        Self::certify(kind, norms)
    }

    fn certify(kind: BasisKind, norms: Vec<f64>) -> Result<Self> {
        let mut basis = TestBasis {
            kind,
            norms,
            gram_residual: 0.0,
        };
        let g = basis.gram()?;
        let m = basis.len();
        let mut resid: f64 = 0.0;
        for i in 0..m {
            for j in 0..m {
                let target = if i == j && !basis.is_null(i) { 1.0 } else { 0.0 };
                resid = resid.max((g[(i, j)] - target).abs());
            }
        }
        if resid >= GRAM_TOL {
            return Err(Error::Degenerate(format!(
                "basis is not orthonormal (Gram residual {resid:.3e})"
            )));
        }
        basis.gram_residual = resid;
        Ok(basis)
    }

    pub fn len(&self) -> usize {
        self.norms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.norms.is_empty()
    }

    /// `‖G − I‖_∞` over the nonzero members.
    pub fn gram_residual(&self) -> f64 {
        self.gram_residual
    }

    /// Whether `φ_{j+1}` is identically zero.
    pub fn is_null(&self, j: usize) -> bool {
        match &self.kind {
            BasisKind::Cosine => false,
            BasisKind::ArExample { ar } => j < ar.len(),
        }
    }

    pub fn name(&self) -> String {
        match &self.kind {
            BasisKind::Cosine => format!("cosine:{}", self.len()),
            BasisKind::ArExample { .. } => format!("ar-example:{}", self.len()),
        }
    }

    /// `φ_{j+1}(λ)`.
    pub fn eval(&self, j: usize, lambda: f64) -> f64 {
        let k = (j + 1) as f64;
        match &self.kind {
            BasisKind::Cosine => self.norms[j] * (k * lambda).cos(),
            BasisKind::ArExample { ar } => {
                if j < ar.len() {
                    return 0.0;
                }
                let z = Complex64::from_polar(1.0, -lambda);
                let mut alpha = Complex64::new(1.0, 0.0);
                let mut zk = Complex64::new(1.0, 0.0);
                for &a in ar {
                    zk *= z;
                    alpha -= a * zk;
                }
                self.norms[j] * (k * lambda + 2.0 * alpha.arg()).cos()
            }
        }
    }

    fn quad(&self, singular: bool) -> SpectralQuad {
        SpectralQuad {
            singular_at_zero: singular,
            ..SpectralQuad::default()
        }
        .with_oscillation(self.len() as f64)
    }

    /// Gram matrix `∫ φ_i φ_j` by quadrature.
    pub fn gram(&self) -> Result<DMatrix<f64>> {
        let m = self.len();
        let opts = self.quad(false);
        let mut g = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in 0..=i {
                let v = spectral_integral(&|l: f64| self.eval(i, l) * self.eval(j, l), &opts)?;
                g[(i, j)] = v;
                g[(j, i)] = v;
            }
        }
        Ok(g)
    }
}

/// A basis description resolved against a model: the AR-example basis depends on the
/// autoregressive coefficients.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum BasisSpec {
    Cosine(usize),
    ArExample(usize),
}

impl BasisSpec {
    /// `cosine:m`, `ar-example` (m = 4) or `ar-example:m`.
    pub fn parse(s: &str) -> Result<Self> {
        let (head, arg) = match s.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (s, None),
        };
        let m = match arg {
            Some(a) => a
                .trim()
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("bad basis size in `{s}`")))?,
            None => 4,
        };
        match head.trim() {
            "cosine" => Ok(BasisSpec::Cosine(m)),
            "ar-example" => Ok(BasisSpec::ArExample(m)),
            _ => Err(Error::Config(format!("unknown basis `{s}`"))),
        }
    }

    pub fn name(&self) -> String {
        match self {
            BasisSpec::Cosine(m) => format!("cosine:{m}"),
            BasisSpec::ArExample(m) => format!("ar-example:{m}"),
        }
    }

    pub fn resolve(&self, model: &SpectralModel) -> Result<TestBasis> {
        match self {
            BasisSpec::Cosine(m) => TestBasis::cosine(*m),
            BasisSpec::ArExample(m) => match model.family() {
                Family::Ar1 | Family::Arma { q: 0, .. } => TestBasis::ar_example(*m, model.ar_ma().0),
                other => Err(Error::Unsupported(format!(
                    "the AR-example basis needs a pure autoregression, got {other:?}"
                ))),
            },
        }
    }
}

fn weighted_residual_sums(
    pgram: &Periodogram,
    f: &dyn EvenSpectralFunction,
    funcs: &dyn Fn(f64) -> Vec<f64>,
    k: usize,
) -> Result<Vec<f64>> {
    let grid = pgram.grid();
    let mut acc = vec![0.0; k];
    for ((&l, &w), &i) in grid.points().iter().zip(grid.weights()).zip(pgram.values()) {
        let fv = f.value(l);
        if !(fv > 0.0) || !fv.is_finite() {
            return Err(Error::Domain(format!(
                "hypothesized density is {fv} at grid point {l}"
            )));
        }
        let r = (i / fv - 1.0) * w;
        for (a, v) in acc.iter_mut().zip(funcs(l)) {
            *a += r * v;
        }
    }
    Ok(acc)
}

fn phi_with_factor(
    pgram: &Periodogram,
    e: f64,
    f0: &dyn EvenSpectralFunction,
    basis: &TestBasis,
) -> Result<Vec<f64>> {
    let m = basis.len();
    let sums = weighted_residual_sums(pgram, f0, &|l| (0..m).map(|j| basis.eval(j, l)).collect(), m)?;
    let c = (pgram.sample_len() as f64).sqrt() / (4.0 * PI * e).sqrt();
    Ok(sums.into_iter().map(|s| c * s).collect())
}

/// `Φ_T` for a periodogram and a hypothesized density.
pub fn phi_vector(
    pgram: &Periodogram,
    taper: &Taper,
    f0: &dyn EvenSpectralFunction,
    basis: &TestBasis,
) -> Result<Vec<f64>> {
    phi_with_factor(pgram, taper.tapering_factor()?, f0, basis)
}

/// `Δ_T` over the parameters in `free`.
pub fn delta_vector(pgram: &Periodogram, taper: &Taper, model: &SpectralModel, free: &[usize]) -> Result<Vec<f64>> {
    let e = taper.tapering_factor()?;
    let score = |l: f64| -> Vec<f64> {
        match model.score(l) {
            Ok(s) => free.iter().map(|&k| s[k]).collect(),
            Err(_) => vec![f64::NAN; free.len()],
        }
    };
    let sums = weighted_residual_sums(pgram, model, &score, free.len())?;
    let c = (pgram.sample_len() as f64).sqrt() / (4.0 * PI * e).sqrt();
    Ok(sums.into_iter().map(|s| c * s).collect())
}

/// `(1/4π) ∫ ∂_k ln f ∂_j ln f` over the parameters in `free`.
pub fn gamma_matrix(model: &SpectralModel, free: &[usize]) -> Result<DMatrix<f64>> {
    Ok(info_matrices_for(model, free, crate::whittle::WeightFunction::Unit, 0.0)?.w)
}

fn basis_score_integrals(model: &SpectralModel, basis: &TestBasis, free: &[usize]) -> Result<DMatrix<f64>> {
    let opts = basis.quad(model.is_fractional());
    let mut out = DMatrix::zeros(basis.len(), free.len());
    for j in 0..basis.len() {
        if basis.is_null(j) {
            continue;
        }
        for (c, &k) in free.iter().enumerate() {
            out[(j, c)] = spectral_integral(
                &|l: f64| match model.score(l) {
                    Ok(s) => basis.eval(j, l) * s[k],
                    Err(_) => 0.0,
                },
                &opts,
            )?;
        }
    }
    Ok(out)
}

/// `b_jk = (4π e(h))^{-1/2} ∫ φ_j ∂_k ln f` over the parameters in `free`.
pub fn b_matrix(model: &SpectralModel, basis: &TestBasis, taper: &Taper, free: &[usize]) -> Result<DMatrix<f64>> {
    let e = taper.tapering_factor()?;
    Ok(basis_score_integrals(model, basis, free)? / (4.0 * PI * e).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixtureWeights {
    pub nu: Vec<f64>,
    /// Eigenvalues moved into `[0, 1]`.
    pub clamped: usize,
}

/// `ν_k = 1 − μ_k` with `μ_k` the eigenvalues of `Γ⁻¹ B'B`, clamped to `[0, 1]`.
pub fn mixture_weights(gamma: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<MixtureWeights> {
    let chol = gamma
        .clone()
        .cholesky()
        .ok_or_else(|| Error::SingularInformation("Γ is not positive definite".into()))?;
    let l_inv = chol
        .l()
        .try_inverse()
        .ok_or_else(|| Error::SingularInformation("Γ is singular".into()))?;
    let btb = b.transpose() * b;
    let sym = &l_inv * btb * l_inv.transpose();
    let sym = (&sym + sym.transpose()) * 0.5;
    let mut mu: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
    mu.sort_by(|a, b| a.total_cmp(b));
    let mut clamped = 0;
    let nu = mu
        .iter()
        .map(|&m| {
            let v = 1.0 - m;
            if !(0.0..=1.0).contains(&v) {
                clamped += 1;
            }
            v.clamp(0.0, 1.0)
        })
        .collect();
    Ok(MixtureWeights { nu, clamped })
}

/// Law of `Σ c_k ξ_k²` with independent standard normal `ξ_k`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixtureLaw {
    pub weights: Vec<f64>,
}

impl MixtureLaw {
    pub fn new(weights: Vec<f64>) -> Self {
        MixtureLaw { weights }
    }

    /// Degrees of freedom when every weight is 0 or 1.
    pub fn exact_dof(&self) -> Option<usize> {
        let mut dof = 0;
        for &w in &self.weights {
            if (w - 1.0).abs() < EXACT_TOL {
                dof += 1;
            } else if w.abs() >= EXACT_TOL {
                return None;
            }
        }
        Some(dof)
    }

    /// Sorted draws from the fixed internal stream.
    pub fn draws(&self, n: usize) -> Vec<f64> {
        let mut rng = stream_rng(MIXTURE_SEED, INTERNAL_STREAM);
        let mut out: Vec<f64> = (0..n)
            .map(|_| {
                self.weights
                    .iter()
                    .map(|&w| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        w * z * z
                    })
                    .sum()
            })
            .collect();
        out.sort_by(|a, b| a.total_cmp(b));
        out
    }

    /// Upper-tail probability and the 95% Monte Carlo half-width (zero when exact).
    pub fn p_value(&self, s: f64) -> (f64, f64) {
        if let Some(dof) = self.exact_dof() {
            return (chi2_sf(s, dof), 0.0);
        }
        let draws = self.draws(MIXTURE_DRAWS);
        let below = draws.partition_point(|&d| d < s);
        let p = (draws.len() - below) as f64 / draws.len() as f64;
        (p, 1.96 * (p * (1.0 - p) / draws.len() as f64).sqrt())
    }

    pub fn quantile(&self, p: f64) -> f64 {
        if let Some(dof) = self.exact_dof() {
            return if dof == 0 { 0.0 } else { chi2_quantile(p, dof) };
        }
        let draws = self.draws(MIXTURE_DRAWS);
        let idx = ((p * draws.len() as f64).ceil() as usize).clamp(1, draws.len()) - 1;
        draws[idx]
    }

    /// CDF, exact for a plain `χ²`, empirical from `draws` otherwise.
    pub fn cdf_fn(&self) -> Box<dyn Fn(f64) -> f64 + Sync> {
        match self.exact_dof() {
            Some(dof) => Box::new(move |x| 1.0 - chi2_sf(x, dof)),
            None => {
                let draws = self.draws(MIXTURE_DRAWS);
                Box::new(move |x| draws.partition_point(|&d| d <= x) as f64 / draws.len() as f64)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GofResult {
    pub statistic: f64,
    pub reference: MixtureLaw,
    pub p_value: f64,
    pub p_value_halfwidth: f64,
    pub critical_value: f64,
    pub alpha: f64,
    pub reject: bool,
    pub phi: Vec<f64>,
    pub theta_hat: Option<Vec<f64>>,
    /// Clamped weights `ν` from `Γ` and `B`, composite test only.
    pub nu: Vec<f64>,
    pub clamped: usize,
    pub warnings: Vec<String>,
}

fn finish(phi: Vec<f64>, law: MixtureLaw, alpha: f64) -> GofResult {
    let statistic: f64 = phi.iter().map(|v| v * v).sum();
    let (p_value, p_value_halfwidth) = law.p_value(statistic);
    let critical_value = law.quantile(1.0 - alpha);
    GofResult {
        statistic,
        reject: statistic > critical_value,
        reference: law,
        p_value,
        p_value_halfwidth,
        critical_value,
        alpha,
        phi,
        theta_hat: None,
        nu: vec![],
        clamped: 0,
        warnings: vec![],
    }
}

/// Simple hypothesis test on a precomputed periodogram.
pub fn simple_test_periodogram(
    pgram: &Periodogram,
    taper: &Taper,
    f0: &dyn EvenSpectralFunction,
    basis: &TestBasis,
    alpha: f64,
) -> Result<GofResult> {
    let phi = phi_vector(pgram, taper, f0, basis)?;
    let active = (0..basis.len()).filter(|&j| !basis.is_null(j)).count();
    Ok(finish(phi, MixtureLaw::new(vec![1.0; active]), alpha))
}

/// Tests `f = f0` with `S` referred to `χ²_m`.
pub fn simple_test(
    series: &[f64],
    taper: &Taper,
    f0: &SpectralModel,
    basis: &BasisSpec,
    alpha: f64,
) -> Result<GofResult> {
    let grid = whittle_grid(f0, series.len(), 4)?;
    let pgram = tapered_periodogram(series, taper, &grid)?;
    simple_test_periodogram(&pgram, taper, f0, &basis.resolve(f0)?, alpha)
}

/// Weights of the limit law of `S(θ̂)` when `θ̂` is the tapered Whittle estimate over
/// `free`: eigenvalues of the asymptotic covariance of `Φ(θ̂)`.
pub fn composite_limit_weights(
    model: &SpectralModel,
    basis: &TestBasis,
    taper: &Taper,
    free: &[usize],
    cfg: &WhittleConfig,
) -> Result<Vec<f64>> {
    let e = taper.tapering_factor()?;
    let m = basis.len();
    let p = free.len();
    let info = info_matrices_for(model, free, cfg.weight, cfg.kappa4)?;
    let w_inv = info
        .w
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::SingularInformation(format!("W is singular for {model}")))?;
    let phi_score = basis_score_integrals(model, basis, free)?;
    let gram = basis.gram()?;
    let opts = basis.quad(model.is_fractional());
    let weighted = |k: usize, pow: i32| {
        move |l: f64| match model.score(l) {
            Ok(s) => s[k] * cfg.weight.eval(l).powi(pow),
            Err(_) => 0.0,
        }
    };
    // Joint second moments of ψ = (φ_1..φ_m, ∂_1 ln f · w, ..., ∂_p ln f · w).
    let mut psi_psi = DMatrix::zeros(m + p, m + p);
    let mut psi_int = DVector::zeros(m + p);
    for i in 0..m {
        for j in 0..m {
            psi_psi[(i, j)] = gram[(i, j)];
        }
        psi_int[i] = spectral_integral(&|l: f64| basis.eval(i, l), &opts)?;
        for c in 0..p {
            let v = spectral_integral(
                &|l: f64| match model.score(l) {
                    Ok(s) => basis.eval(i, l) * s[free[c]] * cfg.weight.eval(l),
                    Err(_) => 0.0,
                },
                &opts,
            )?;
            psi_psi[(i, m + c)] = v;
            psi_psi[(m + c, i)] = v;
        }
    }
    for c in 0..p {
        psi_int[m + c] = spectral_integral(&weighted(free[c], 1), &opts)?;
        for d in 0..p {
            psi_psi[(m + c, m + d)] = 4.0 * PI * info.a[(c, d)];
        }
    }
    // Z = √T ∫ (I/f − 1) ψ has covariance 4π e ∫ψψ' + κ₄ e ∫ψ ∫ψ'.
    let cov_z = &psi_psi * (4.0 * PI * e) + &psi_int * psi_int.transpose() * (cfg.kappa4 * e);
    // Φ(θ̂) ≈ Z_φ/√(4πe) − (4πe)^{-1/2} (∫φ ∂ln f) W⁻¹ Z_s/(4π).
    let scale = 1.0 / (4.0 * PI * e).sqrt();
    let mut l = DMatrix::zeros(m, m + p);
    let correction = &phi_score * &w_inv * (-scale / (4.0 * PI));
    for i in 0..m {
        l[(i, i)] = scale;
        for c in 0..p {
            l[(i, m + c)] = correction[(i, c)];
        }
    }
    let cov = &l * cov_z * l.transpose();
    let cov = (&cov + cov.transpose()) * 0.5;
    let mut eig: Vec<f64> = cov.symmetric_eigenvalues().iter().map(|v| v.max(0.0)).collect();
    eig.sort_by(|a, b| b.total_cmp(a));
    Ok(eig)
}

/// Composite test: `θ̂` by tapered Whittle on the same periodogram, `S` evaluated at the
/// fitted density and referred to its mixture limit.
pub fn composite_test(
    series: &[f64],
    taper: &Taper,
    template: &SpectralModel,
    basis: &BasisSpec,
    cfg: &WhittleConfig,
    alpha: f64,
) -> Result<GofResult> {
    let grid = whittle_grid(template, series.len(), cfg.oversample)?;
    let pgram = tapered_periodogram(series, taper, &grid)?;
    let fit = whittle_fit_periodogram(&pgram, taper, template, cfg)?;
    if !fit.converged {
        return Err(Error::NonConvergence(format!(
            "Whittle fit for {template} did not converge (θ̂ = {:?}); test aborted",
            fit.theta_hat
        )));
    }
    let fitted = fit.model(template)?;
    let free: Vec<usize> = (0..fit.theta_hat.len()).collect();
    let tb = basis.resolve(&fitted)?;
    let phi = phi_vector(&pgram, taper, &fitted, &tb)?;
    let weights = composite_limit_weights(&fitted, &tb, taper, &free, cfg)?;
    let gamma = gamma_matrix(&fitted, &free)?;
    let b = b_matrix(&fitted, &tb, taper, &free)?;
    let mix = mixture_weights(&gamma, &b)?;
    let mut result = finish(phi, MixtureLaw::new(weights), alpha);
    let mut warnings = vec![];
    if mix.nu.iter().any(|&v| v >= 1.0) {
        warnings.push(
            "some ν equal 1 (score-orthogonal basis components); the limit law is taken from the \
             covariance of Φ(θ̂)"
                .to_string(),
        );
    }
    if mix.clamped > 0 {
        warnings.push(format!("{} mixture weight(s) clamped into [0, 1]", mix.clamped));
    }
    result.theta_hat = Some(fit.theta_hat);
    result.nu = mix.nu;
    result.clamped = mix.clamped;
    result.warnings = warnings;
    Ok(result)
}
