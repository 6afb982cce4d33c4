//! Tapered Toeplitz matrices `B_T^h(ψ) = [ψ̂(t-s) h(t/T) h(s/T)]`, trace approximations and
//! the exact law of Gaussian tapered quadratic forms.

use crate::error::{Error, Result};
use crate::functionals::integrate_product;
use crate::rng::StreamRng;
use crate::taper::Taper;
use crate::EvenSpectralFunction;
use nalgebra::{DMatrix, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};
use std::f64::consts::PI;

pub const BUILD_LIMIT: usize = 2048;
pub const CUMULANT_LIMIT: usize = 1024;
pub const EIGEN_LIMIT: usize = 512;

#[derive(Debug, Clone, PartialEq)]
pub struct TaperedToeplitzMatrix {
    generator: String,
    taper: String,
    matrix: DMatrix<f64>,
}

impl TaperedToeplitzMatrix {
    pub fn order(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn generator(&self) -> &str {
        &self.generator
    }

    pub fn taper_name(&self) -> &str {
        &self.taper
    }
}

fn guard(what: &'static str, size: usize, limit: usize) -> Result<()> {
    if size > limit {
        return Err(Error::Size { what, size, limit });
    }
    if size == 0 {
        return Err(Error::Domain(format!("{what} must be positive")));
    }
    Ok(())
}

fn coefficients(psi: &dyn EvenSpectralFunction, len: usize) -> Result<Vec<f64>> {
    (0..len as i64).map(|u| psi.fourier_coefficient(u)).collect()
}

fn toeplitz_from(coeffs: &[f64], weights: &[f64]) -> DMatrix<f64> {
    let n = weights.len();
    DMatrix::from_fn(n, n, |t, s| coeffs[t.abs_diff(s)] * (weights[t] * weights[s]))
}

/// Dense `T × T` matrix `ψ̂(t-s) h(t/T) h(s/T)`.
pub fn build_matrix(
    psi: &dyn EvenSpectralFunction,
    taper: &Taper,
    len: usize,
) -> Result<TaperedToeplitzMatrix> {
    guard("Toeplitz order", len, BUILD_LIMIT)?;
    let coeffs = coefficients(psi, len)?;
    Ok(TaperedToeplitzMatrix {
        generator: psi.describe(),
        taper: taper.name().to_string(),
        matrix: toeplitz_from(&coeffs, &taper.weights(len)),
    })
}

/// `(1/T) tr[A_1 ⋯ A_m]` for `m ∈ 1..=4`.
pub fn trace_product(matrices: &[&TaperedToeplitzMatrix]) -> Result<f64> {
    if matrices.is_empty() || matrices.len() > 4 {
        return Err(Error::UnsupportedArity(matrices.len()));
    }
    let n = matrices[0].order();
    if matrices.iter().any(|m| m.order() != n) {
        return Err(Error::Shape("trace product of matrices with different orders".into()));
    }
    let trace = match matrices.len() {
        1 => matrices[0].matrix.trace(),
        2 => trace_of_product(&matrices[0].matrix, &matrices[1].matrix),
        _ => {
            let mut left = &matrices[0].matrix * &matrices[1].matrix;
            for m in &matrices[2..matrices.len() - 1] {
                left = &left * &m.matrix;
            }
            trace_of_product(&left, &matrices[matrices.len() - 1].matrix)
        }
    };
    Ok(trace / n as f64)
}

/// `tr[AB] = Σ_ij A_ij B_ji` without forming the product.
fn trace_of_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter()
        .zip(b.transpose().iter())
        .map(|(x, y)| x * y)
        .sum()
}

/// `M = (2π)^{m-1} H_{2m} ∫ ψ_1 ⋯ ψ_m dλ`, the limit of [`trace_product`] for tapered
/// factors. Each factor carries `h` on both sides, so the taper enters through `H_{2m}`.
pub fn trace_limit(psis: &[&dyn EvenSpectralFunction], taper: &Taper) -> Result<f64> {
    let m = psis.len();
    if m == 0 || m > 4 {
        return Err(Error::UnsupportedArity(m));
    }
    let integral = integrate_product(psis, 0.0)?;
    Ok((2.0 * PI).powi(m as i32 - 1) * taper.moment(2 * m) * integral)
}

/// `Δ(T) = |S(T) - M|`.
pub fn trace_deviation(psis: &[&dyn EvenSpectralFunction], taper: &Taper, len: usize) -> Result<f64> {
    let built: Vec<TaperedToeplitzMatrix> = psis
        .iter()
        .map(|p| build_matrix(*p, taper, len))
        .collect::<Result<_>>()?;
    let refs: Vec<&TaperedToeplitzMatrix> = built.iter().collect();
    Ok((trace_product(&refs)? - trace_limit(psis, taper)?).abs())
}

/// Covariance of the tapered data `B^h(f)` and the untapered kernel `T(g)`: the quadratic
/// form `Q_T^h = Y' T(g) Y` with `Y = h ∘ X ~ N(0, B^h(f))`.
fn qf_factors(
    f: &dyn EvenSpectralFunction,
    g: &dyn EvenSpectralFunction,
    taper: &Taper,
    len: usize,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let sigma = toeplitz_from(&coefficients(f, len)?, &taper.weights(len));
    let kernel = toeplitz_from(&coefficients(g, len)?, &vec![1.0; len]);
    Ok((sigma, kernel))
}

/// `χ_k(Q_T^h) = 2^{k-1} (k-1)! tr[(B^h(f) T(g))^k]` for Gaussian data, `k ∈ 1..=4`.
pub fn qf_cumulant(
    f: &dyn EvenSpectralFunction,
    g: &dyn EvenSpectralFunction,
    taper: &Taper,
    len: usize,
    k: usize,
) -> Result<f64> {
    guard("quadratic-form cumulant order", len, CUMULANT_LIMIT)?;
    if !(1..=4).contains(&k) {
        return Err(Error::UnsupportedArity(k));
    }
    let (sigma, kernel) = qf_factors(f, g, taper, len)?;
    let trace = match k {
        1 => trace_of_product(&sigma, &kernel),
        2 => {
            let m = &sigma * &kernel;
            trace_of_product(&m, &m)
        }
        3 => {
            let m = &sigma * &kernel;
            let m2 = &m * &m;
            trace_of_product(&m2, &m)
        }
        _ => {
            let m = &sigma * &kernel;
            let m2 = &m * &m;
            trace_of_product(&m2, &m2)
        }
    };
    let factorial: f64 = (1..k).map(|j| j as f64).product();
    Ok(2f64.powi(k as i32 - 1) * factorial * trace)
}

/// How the eigenvalues of `B^h(f) T(g)` were obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EigenRoute {
    /// `T(g)^{1/2} B^h(f) T(g)^{1/2}`.
    KernelRoot,
    /// `B^h(f)^{1/2} T(g) B^h(f)^{1/2}`.
    CovarianceRoot,
    /// Non-symmetric eigensolve of the product.
    NonSymmetric,
}

/// Law of `Q_T^h = Σ_j λ_j ξ_j²` with iid standard normal `ξ_j`.
#[derive(Debug, Clone)]
pub struct QfDistribution {
    pub eigenvalues: Vec<f64>,
    /// Number of eigenvalues with `|λ| ≤ 1e-10 · max |λ|`.
    pub rank_deficiency: usize,
    pub route: EigenRoute,
}

impl QfDistribution {
    pub fn sample(&self, rng: &mut StreamRng) -> f64 {
        self.eigenvalues
            .iter()
            .map(|&l| {
                let z: f64 = StandardNormal.sample(rng);
                l * z * z
            })
            .sum()
    }

    pub fn sample_many(&self, rng: &mut StreamRng, draws: usize) -> Vec<f64> {
        (0..draws).map(|_| self.sample(rng)).collect()
    }

    pub fn mean(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }
}

/// Square root of a symmetric matrix, or `None` if it has a clearly negative eigenvalue.
fn psd_sqrt(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let eig = SymmetricEigen::new(m.clone());
    let scale = eig.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if eig.eigenvalues.iter().any(|&v| v < -1e-10 * scale) {
        return None;
    }
    let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    Some(&eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose())
}

pub fn qf_distribution(
    f: &dyn EvenSpectralFunction,
    g: &dyn EvenSpectralFunction,
    taper: &Taper,
    len: usize,
) -> Result<QfDistribution> {
    guard("quadratic-form eigensolve order", len, EIGEN_LIMIT)?;
    let (sigma, kernel) = qf_factors(f, g, taper, len)?;
    let symmetric = |root: &DMatrix<f64>, middle: &DMatrix<f64>| {
        let s = root * middle * root;
        let s = (&s + s.transpose()) * 0.5;
        SymmetricEigen::new(s).eigenvalues.iter().copied().collect::<Vec<f64>>()
    };
    let (mut eigenvalues, route) = if let Some(root) = psd_sqrt(&kernel) {
        (symmetric(&root, &sigma), EigenRoute::KernelRoot)
    } else if let Some(root) = psd_sqrt(&sigma) {
        (symmetric(&root, &kernel), EigenRoute::CovarianceRoot)
    } else {
        let product = &sigma * &kernel;
        let complex = product.complex_eigenvalues();
        let scale = complex.iter().fold(0.0f64, |a, z| a.max(z.norm()));
        if complex.iter().any(|z| z.im.abs() > 1e-8 * scale.max(1.0)) {
            return Err(Error::Degenerate(
                "quadratic-form matrix has complex eigenvalues".into(),
            ));
        }
        (complex.iter().map(|z| z.re).collect(), EigenRoute::NonSymmetric)
    };
    eigenvalues.sort_by(|a, b| b.total_cmp(a));
    let scale = eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let rank_deficiency = eigenvalues.iter().filter(|v| v.abs() <= 1e-10 * scale).count();
    Ok(QfDistribution {
        eigenvalues,
        rank_deficiency,
        route,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::{quadratic_form, GeneratingFunction};
    use crate::models::{NoiseDriver, SpectralModel};
    use crate::rng::stream_rng;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn flat() -> GeneratingFunction {
        GeneratingFunction::constant(1.0 / (2.0 * PI))
    }

    #[test]
    fn build_examples() {
        let tukey = Taper::tukey_hanning();
        let m = build_matrix(&flat(), &tukey, 6).unwrap();
        let h = tukey.weights(6);
        for t in 0..6 {
            for s in 0..6 {
                let want = if t == s { h[t] * h[t] } else { 0.0 };
                assert_abs_diff_eq!(m.matrix()[(t, s)], want, epsilon = 1e-15);
            }
        }
        let ar = SpectralModel::ar1(0.5, 1.0).unwrap();
        let lin = Taper::linear();
        let m = build_matrix(&ar, &lin, 8).unwrap();
        let h = lin.weights(8);
        for t in 0..8 {
            for s in 0..8 {
                let want = 0.5f64.powi((t as i32 - s as i32).abs()) / 0.75 * h[t] * h[s];
                assert_abs_diff_eq!(m.matrix()[(t, s)], want, epsilon = 1e-14);
            }
        }
        assert_eq!(m.matrix(), &m.matrix().transpose());
        let r = build_matrix(&ar, &Taper::rectangular(), 5).unwrap();
        assert_abs_diff_eq!(r.matrix()[(0, 4)], 0.0625 / 0.75, epsilon = 1e-15);
        assert!(matches!(build_matrix(&ar, &lin, BUILD_LIMIT + 1), Err(Error::Size { .. })));
    }

    #[test]
    fn trace_examples() {
        let tukey = Taper::tukey_hanning();
        let len = 512;
        let a = build_matrix(&flat(), &tukey, len).unwrap();
        let s = trace_product(&[&a, &a]).unwrap();
        let direct: f64 = tukey.weights(len).iter().map(|h| h.powi(4)).sum::<f64>() / len as f64;
        assert_abs_diff_eq!(s, direct, epsilon = 1e-14);
        assert!((s - 35.0 / 128.0).abs() < 1e-3);

        let f = SpectralModel::ar1(0.5, 1.0).unwrap();
        let g = GeneratingFunction::cosine(1);
        let w = SpectralModel::white_noise(2.0).unwrap();
        let mf = build_matrix(&f, &tukey, 32).unwrap();
        let mg = build_matrix(&g, &tukey, 32).unwrap();
        let mw = build_matrix(&w, &tukey, 32).unwrap();
        let abc = trace_product(&[&mf, &mg, &mw]).unwrap();
        let bca = trace_product(&[&mg, &mw, &mf]).unwrap();
        assert_abs_diff_eq!(abc, bca, epsilon = 1e-12);
        assert!(trace_product(&[]).is_err());
        let small = build_matrix(&f, &tukey, 16).unwrap();
        assert!(matches!(trace_product(&[&mf, &small]), Err(Error::Shape(_))));
    }

    #[test]
    fn trace_limit_examples() {
        let rect = Taper::rectangular();
        let f = flat();
        assert_abs_diff_eq!(trace_limit(&[&f, &f], &rect).unwrap(), 1.0, epsilon = 1e-12);
        let tukey = Taper::tukey_hanning();
        assert_abs_diff_eq!(trace_limit(&[&f, &f], &tukey).unwrap(), 35.0 / 128.0, epsilon = 1e-12);
        let zero = GeneratingFunction::zero();
        let ar = SpectralModel::ar1(0.3, 1.0).unwrap();
        assert_eq!(trace_limit(&[&ar, &zero, &f], &tukey).unwrap(), 0.0);
    }

    #[test]
    fn single_trace_identity() {
        let tukey = Taper::tukey_hanning();
        let gens: Vec<Box<dyn EvenSpectralFunction>> = vec![
            Box::new(flat()),
            Box::new(SpectralModel::ar1(0.5, 1.0).unwrap()),
            Box::new(SpectralModel::arfima0d0(0.2).unwrap()),
            Box::new(GeneratingFunction::indicator(1.0).unwrap()),
            Box::new(GeneratingFunction::cosine(0)),
        ];
        let len = 256;
        let h2: f64 = tukey.weights(len).iter().map(|h| h * h).sum();
        for g in &gens {
            let m = build_matrix(g.as_ref(), &tukey, len).unwrap();
            let s = trace_product(&[&m]).unwrap();
            let want = g.fourier_coefficient(0).unwrap() * h2 / len as f64;
            assert_abs_diff_eq!(s, want, epsilon = 1e-12);
            let limit = trace_limit(&[g.as_ref()], &tukey).unwrap();
            assert!((s - limit).abs() < 0.01 * limit.abs().max(1.0));
        }
    }

    #[test]
    fn deviation_shrinks_for_admissible_pairs() {
        let ar = SpectralModel::ar1(0.5, 1.0).unwrap();
        let fd = SpectralModel::arfima0d0(0.2).unwrap();
        let cos = GeneratingFunction::cosine(1);
        let ind = GeneratingFunction::indicator(1.0).unwrap();
        for taper in [Taper::rectangular(), Taper::tukey_hanning()] {
            for (f, g) in [(&ar as &dyn EvenSpectralFunction, &cos), (&fd, &cos), (&ar, &ind)] {
                let d: Vec<f64> = [64, 256, 1024]
                    .iter()
                    .map(|&t| trace_deviation(&[f, g], &taper, t).unwrap())
                    .collect();
                assert!(d[2] < d[0], "{} {}: {d:?}", taper.name(), g.name());
            }
        }
        let tukey = Taper::tukey_hanning();
        let d: Vec<f64> = [64, 128, 256, 512, 1024]
            .iter()
            .map(|&t| trace_deviation(&[&ar, &cos], &tukey, t).unwrap())
            .collect();
        assert!(d.windows(2).all(|w| w[1] < w[0]), "{d:?}");
        assert!(d[4] < 0.01);
        assert!(d.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn cumulant_one_is_expected_quadratic_form() {
        let f = SpectralModel::ar1(0.5, 1.0).unwrap();
        let g = GeneratingFunction::cosine(1);
        let taper = Taper::tukey_hanning();
        let k1 = qf_cumulant(&f, &g, &taper, 64, 1).unwrap();
        let dist = qf_distribution(&f, &g, &taper, 64).unwrap();
        assert_abs_diff_eq!(k1, dist.mean(), epsilon = 1e-9 * k1.abs());
        let k2 = qf_cumulant(&f, &g, &taper, 64, 2).unwrap();
        let var: f64 = 2.0 * dist.eigenvalues.iter().map(|l| l * l).sum::<f64>();
        assert_abs_diff_eq!(k2, var, epsilon = 1e-9 * k2);
        let k3 = qf_cumulant(&f, &g, &taper, 64, 3).unwrap();
        assert_abs_diff_eq!(k3, 8.0 * dist.eigenvalues.iter().map(|l| l.powi(3)).sum::<f64>(), epsilon = 1e-8 * k3.abs());
        assert!(qf_cumulant(&f, &g, &taper, 64, 5).is_err());
        assert!(matches!(qf_cumulant(&f, &g, &taper, CUMULANT_LIMIT + 1, 1), Err(Error::Size { .. })));
    }

    #[test]
    fn second_cumulant_limit() {
        let f = SpectralModel::ar1(0.5, 1.0).unwrap();
        let g = GeneratingFunction::cosine(1);
        let taper = Taper::tukey_hanning();
        let limit = 16.0 * PI.powi(3) * taper.moment(4) * integrate_product(&[&f, &f, &g, &g], 2.0).unwrap();
        let k2 = qf_cumulant(&f, &g, &taper, 1024, 2).unwrap() / 1024.0;
        assert!((k2 / limit - 1.0).abs() < 0.01, "{k2} vs {limit}");
    }

    #[test]
    fn diagonal_case_eigenvalues() {
        let f = flat();
        let dist = qf_distribution(&f, &f, &Taper::rectangular(), 20).unwrap();
        assert!(dist.eigenvalues.iter().all(|&l| (l - 1.0).abs() < 1e-12));
        assert_eq!(dist.rank_deficiency, 0);
    }

    #[test]
    fn annihilated_band_is_reported() {
        let f = SpectralModel::white_noise(1.0).unwrap();
        let g = GeneratingFunction::cosine(1);
        let dist = qf_distribution(&f, &g, &Taper::rectangular(), 5).unwrap();
        assert_eq!(dist.rank_deficiency, 1);
        assert_eq!(dist.route, EigenRoute::CovarianceRoot);
        let d = qf_distribution(&f, &GeneratingFunction::cosine(0), &Taper::tukey_hanning(), 9).unwrap();
        assert_eq!(d.route, EigenRoute::KernelRoot);
    }

    #[test]
    fn sampler_matches_simulated_quadratic_form() {
        let f = SpectralModel::ar1(0.5, 1.0).unwrap();
        let g = GeneratingFunction::cosine(1);
        let taper = Taper::tukey_hanning();
        let len = 32;
        let dist = qf_distribution(&f, &g, &taper, len).unwrap();
        let mut rng = stream_rng(5, 0);
        let mut a = dist.sample_many(&mut rng, 20_000);
        let mut b: Vec<f64> = (0..20_000u64)
            .map(|r| {
                let x = f.simulate_stream(NoiseDriver::Gaussian, len, 6, r).unwrap().values;
                quadratic_form(&x, &taper, &g).unwrap()
            })
            .collect();
        a.sort_by(|x, y| x.total_cmp(y));
        b.sort_by(|x, y| x.total_cmp(y));
        let mut d: f64 = 0.0;
        let (mut i, mut j) = (0, 0);
        while i < a.len() && j < b.len() {
            if a[i] <= b[j] {
                i += 1;
            } else {
                j += 1;
            }
            d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
        }
        assert!(d < 0.02, "{d}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn matrices_are_symmetric_with_tapered_diagonal(th in -0.9f64..0.9, len in 2usize..40, k in 0usize..3) {
            let taper = [Taper::rectangular(), Taper::linear(), Taper::tukey_hanning()][k].clone();
            let f = SpectralModel::ar1(th, 1.0).unwrap();
            let m = build_matrix(&f, &taper, len).unwrap();
            let h = taper.weights(len);
            let r0 = f.covariance(0).unwrap();
            for t in 0..len {
                prop_assert!((m.matrix()[(t, t)] - r0 * h[t] * h[t]).abs() <= 1e-12 * r0);
                for s in 0..len {
                    prop_assert_eq!(m.matrix()[(t, s)], m.matrix()[(s, t)]);
                }
            }
        }
    }
}
