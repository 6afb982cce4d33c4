//! Sample statistics used by the Monte Carlo checks.

use crate::error::{Error, Result};
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Unbiased sample variance.
pub fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)
}

pub fn median(x: &[f64]) -> f64 {
    quantile(x, 0.5)
}

/// Linear-interpolation sample quantile.
pub fn quantile(x: &[f64], p: f64) -> f64 {
    let mut s = x.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let pos = p.clamp(0.0, 1.0) * (s.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    s[lo] + (pos - lo as f64) * (s[hi] - s[lo])
}

/// Unbiased k-statistics `k_1..k_4` (estimators of the first four cumulants).
pub fn k_statistics(x: &[f64]) -> [f64; 4] {
    let n = x.len() as f64;
    let m = mean(x);
    let (mut s2, mut s3, mut s4) = (0.0, 0.0, 0.0);
    for v in x {
        let d = v - m;
        s2 += d * d;
        s3 += d * d * d;
        s4 += d * d * d * d;
    }
    let (m2, m3, m4) = (s2 / n, s3 / n, s4 / n);
    let k2 = n / (n - 1.0) * m2;
    let k3 = n * n / ((n - 1.0) * (n - 2.0)) * m3;
    let k4 = n * n * ((n + 1.0) * m4 - 3.0 * (n - 1.0) * m2 * m2) / ((n - 1.0) * (n - 2.0) * (n - 3.0));
    [m, k2, k3, k4]
}

/// Standard error of a statistic estimated by batch means: the sample is split into
/// `batches` contiguous groups and the spread of the per-batch statistic is scaled by
/// `1/√batches`.
pub fn batch_standard_error<F: Fn(&[f64]) -> f64>(x: &[f64], batches: usize, stat: F) -> f64 {
    let size = x.len() / batches;
    let values: Vec<f64> = (0..batches).map(|b| stat(&x[b * size..(b + 1) * size])).collect();
    (variance(&values) / batches as f64).sqrt()
}

/// Monte Carlo standard error of the sample mean.
pub fn se_mean(x: &[f64]) -> f64 {
    (variance(x) / x.len() as f64).sqrt()
}

/// Monte Carlo standard error of the sample variance, `sqrt((m4 - s⁴)/n)`.
pub fn se_variance(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let m = mean(x);
    let m2 = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
    let m4 = x.iter().map(|v| (v - m).powi(4)).sum::<f64>() / n;
    ((m4 - m2 * m2) / n).max(0.0).sqrt()
}

/// Standard error of an empirical proportion.
pub fn se_proportion(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

/// `sup |F_n - F|` against a continuous CDF.
pub fn ks_statistic<F: Fn(f64) -> f64>(x: &[f64], cdf: F) -> f64 {
    let mut s = x.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = cdf(v);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Two-sample Kolmogorov–Smirnov distance.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(|x, y| x.total_cmp(y));
    b.sort_by(|x, y| x.total_cmp(y));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Asymptotic Kolmogorov tail probability `P(D_n > d)` with Stephens' small-sample
/// correction; `n` is the effective sample size.
pub fn kolmogorov_pvalue(d: f64, n: f64) -> f64 {
    let sn = n.sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = (-2.0 * k * k * lambda * lambda).exp();
        sum += if k as i64 % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

pub fn normal_cdf(x: f64) -> f64 {
    Normal::new(0.0, 1.0).expect("standard normal").cdf(x)
}

pub fn chi2_sf(x: f64, dof: usize) -> f64 {
    if dof == 0 {
        return if x > 0.0 { 0.0 } else { 1.0 };
    }
    ChiSquared::new(dof as f64).expect("positive dof").sf(x.max(0.0))
}

pub fn chi2_cdf(x: f64, dof: usize) -> f64 {
    1.0 - chi2_sf(x, dof)
}

pub fn chi2_quantile(p: f64, dof: usize) -> f64 {
    ChiSquared::new(dof as f64).expect("positive dof").inverse_cdf(p)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormalityDiagnostics {
    pub n: usize,
    pub ks_stat: f64,
    pub ks_pvalue: f64,
    pub skew: f64,
    pub kurt: f64,
}

/// Two-sided KS distance to `N(mean, var)` with plug-in moments, plus skewness and excess
/// kurtosis. A diagnostic, not a formal test (the plug-in makes the p-value conservative).
pub fn normality_diagnostics(x: &[f64]) -> Result<NormalityDiagnostics> {
    if x.len() < 50 {
        return Err(Error::Degenerate(format!("need at least 50 values, got {}", x.len())));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Degenerate("sample has non-finite values".into()));
    }
    let m = mean(x);
    let v = variance(x);
    if !(v > 0.0) {
        return Err(Error::Degenerate("sample has zero variance".into()));
    }
    let sd = v.sqrt();
    let ks_stat = ks_statistic(x, |t| normal_cdf((t - m) / sd));
    let k = k_statistics(x);
    Ok(NormalityDiagnostics {
        n: x.len(),
        ks_stat,
        ks_pvalue: kolmogorov_pvalue(ks_stat, x.len() as f64),
        skew: k[2] / k[1].powf(1.5),
        kurt: k[3] / (k[1] * k[1]),
    })
}
