//! Data tapers `h: [0, 1] → [0, ∞)`, their moments and the tapered kernels built from them.

use crate::error::{Error, Result};
use crate::quad::adaptive_simpson;
use num_complex::Complex64;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

/// Number of cached moments `H_1..H_8`. Only `H_1..H_4` enter the variance formulas;
/// `H_{2m}` for `m ≤ 4` is needed by trace limits of products of up to four matrices.
pub const CACHED_MOMENTS: usize = 8;

const MOMENT_TOL: f64 = 1e-12;
const NONNEG_GRID: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaperKind {
    Rectangular,
    Linear,
    TukeyHanning,
    Custom,
}

type TaperFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct Taper {
    kind: TaperKind,
    name: String,
    func: TaperFn,
    bounded_variation: bool,
    moments: [f64; CACHED_MOMENTS],
}

impl fmt::Debug for Taper {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Taper")
            .field("kind", &self.kind)
            .field("name", &self.name)
            .field("moments", &self.moments)
            .finish()
    }
}

impl Taper {
    fn build(kind: TaperKind, name: &str, func: TaperFn, bounded_variation: bool) -> Self {
        let mut moments = [0.0; CACHED_MOMENTS];
        for (i, m) in moments.iter_mut().enumerate() {
            let k = (i + 1) as i32;
            let f = &func;
            *m = adaptive_simpson(&|t: f64| f(t).powi(k), 0.0, 1.0, MOMENT_TOL);
        }
        Taper {
            kind,
            name: name.to_string(),
            func,
            bounded_variation,
            moments,
        }
    }

    /// `h(t) = 1` on `[0, 1]`: the non-tapered case.
    pub fn rectangular() -> Self {
        Self::build(TaperKind::Rectangular, "rect", Arc::new(|_| 1.0), true)
    }

    /// `h(t) = 1 - t`.
    pub fn linear() -> Self {
        Self::build(TaperKind::Linear, "linear", Arc::new(|t| 1.0 - t), true)
    }

    /// `h(t) = (1 - cos πt) / 2`.
    pub fn tukey_hanning() -> Self {
        Self::build(
            TaperKind::TukeyHanning,
            "tukey",
            Arc::new(|t| 0.5 * (1.0 - (PI * t).cos())),
            true,
        )
    }

    /// A user-supplied taper. Nonnegativity is checked on a 4096-point grid; bounded
    /// variation is taken on trust from `bounded_variation`.
    pub fn custom<F>(name: &str, f: F, bounded_variation: bool) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        for i in 0..=NONNEG_GRID {
            let t = i as f64 / NONNEG_GRID as f64;
            let v = f(t);
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidTaper(format!(
                    "custom taper `{name}` takes value {v} at t = {t}"
                )));
            }
        }
        Ok(Self::build(TaperKind::Custom, name, Arc::new(f), bounded_variation))
    }

    /// CLI names: `rect`, `linear`, `tukey`.
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "rect" | "rectangular" => Ok(Self::rectangular()),
            "linear" => Ok(Self::linear()),
            "tukey" | "tukey_hanning" | "hanning" => Ok(Self::tukey_hanning()),
            other => Err(Error::InvalidTaper(format!(
                "unknown taper `{other}` (expected rect, linear or tukey)"
            ))),
        }
    }

    pub fn kind(&self) -> TaperKind {
        self.kind
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn declared_bounded_variation(&self) -> bool {
        self.bounded_variation
    }

    /// `h(t)`, zero outside `[0, 1]`.
    pub fn eval(&self, t: f64) -> f64 {
        if (0.0..=1.0).contains(&t) {
            (self.func)(t)
        } else {
            0.0
        }
    }

    /// `h(t/T)` for `t = 1..=T`.
    pub fn weights(&self, len: usize) -> Vec<f64> {
        (1..=len).map(|t| self.eval(t as f64 / len as f64)).collect()
    }

    /// `H_k = ∫_0^1 h^k(t) dt`.
    pub fn moment(&self, k: usize) -> f64 {
        assert!(k >= 1, "taper moments are indexed from 1");
        if k <= CACHED_MOMENTS {
            self.moments[k - 1]
        } else {
            let f = &self.func;
            adaptive_simpson(&|t: f64| f(t).powi(k as i32), 0.0, 1.0, MOMENT_TOL)
        }
    }

    /// `e(h) = H_4 / H_2²`, the variance inflation caused by tapering.
    pub fn tapering_factor(&self) -> Result<f64> {
        let h2 = self.moment(2);
        if h2 <= 0.0 {
            return Err(Error::InvalidTaper(format!(
                "taper `{}` has H_2 = {h2}",
                self.name
            )));
        }
        Ok(self.moment(4) / (h2 * h2))
    }

    /// Tapered Dirichlet kernel `H_{k,T}(λ) = Σ_{t=1}^T h^k(t/T) e^{-iλt}`.
    pub fn dirichlet_kernel(&self, k: usize, len: usize, lambda: f64) -> Complex64 {
        (1..=len)
            .map(|t| {
                let w = self.eval(t as f64 / len as f64).powi(k as i32);
                Complex64::from_polar(w, -lambda * t as f64)
            })
            .sum()
    }

    /// `H_{k,T}(0) = Σ h^k(t/T)`, real.
    pub fn dirichlet_at_zero(&self, k: usize, len: usize) -> f64 {
        (1..=len)
            .map(|t| self.eval(t as f64 / len as f64).powi(k as i32))
            .sum()
    }

    /// Fejér-type kernel
    /// `F_{k,T}(u) = H_{1,T}(u_1)···H_{1,T}(u_{k-1}) H_{1,T}(-Σu_j) / ((2π)^{k-1} H_{k,T}(0))`
    /// for `k ∈ {2, 3}`. The value is real for `k = 2`; for `k = 3` the real part is returned.
    pub fn fejer_kernel(&self, k: usize, len: usize, u: &[f64]) -> Result<f64> {
        if !(2..=3).contains(&k) {
            return Err(Error::UnsupportedArity(k));
        }
        if u.len() != k - 1 {
            return Err(Error::Shape(format!(
                "Fejér kernel of arity {k} takes {} arguments, got {}",
                k - 1,
                u.len()
            )));
        }
        let norm = self.dirichlet_at_zero(k, len);
        if norm == 0.0 {
            return Err(Error::InvalidTaper(format!(
                "H_{{{k},{len}}}(0) = 0 for taper `{}`",
                self.name
            )));
        }
        let sum: f64 = u.iter().sum();
        let mut prod = self.dirichlet_kernel(1, len, -sum);
        for &uj in u {
            prod *= self.dirichlet_kernel(1, len, uj);
        }
        Ok(prod.re / ((2.0 * PI).powi(k as i32 - 1) * norm))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    // ∫_0^1 sin^{2k}(πt/2) dt = (2k-1)!! / (2k)!!
    fn tukey_moment_oracle(k: usize) -> f64 {
        (1..=k).map(|j| (2 * j - 1) as f64 / (2 * j) as f64).product()
    }

    #[test]
    fn moments_match_closed_forms() {
        let rect = Taper::rectangular();
        let lin = Taper::linear();
        let tukey = Taper::tukey_hanning();
        for k in 1..=8 {
            assert_abs_diff_eq!(rect.moment(k), 1.0, epsilon = 1e-10);
            assert_abs_diff_eq!(lin.moment(k), 1.0 / (k as f64 + 1.0), epsilon = 1e-10);
            assert_abs_diff_eq!(tukey.moment(k), tukey_moment_oracle(k), epsilon = 1e-10);
        }
        assert_abs_diff_eq!(tukey.moment(4), 35.0 / 128.0, epsilon = 1e-12);
    }

    #[test]
    fn tapering_factors() {
        assert_abs_diff_eq!(Taper::rectangular().tapering_factor().unwrap(), 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(Taper::linear().tapering_factor().unwrap(), 1.8, epsilon = 1e-9);
        assert_abs_diff_eq!(
            Taper::tukey_hanning().tapering_factor().unwrap(),
            35.0 / 18.0,
            epsilon = 1e-9
        );
    }

    #[test]
    fn degenerate_taper_is_rejected_by_tapering_factor() {
        let zero = Taper::custom("zero", |_| 0.0, true).unwrap();
        assert!(matches!(zero.tapering_factor(), Err(Error::InvalidTaper(_))));
        assert!(matches!(
            zero.fejer_kernel(2, 8, &[0.0]),
            Err(Error::InvalidTaper(_))
        ));
    }

    #[test]
    fn negative_custom_taper_is_rejected() {
        assert!(Taper::custom("neg", |t| t - 0.5, true).is_err());
    }

    #[test]
    fn eval_vanishes_outside_unit_interval() {
        let t = Taper::rectangular();
        assert_eq!(t.eval(-0.1), 0.0);
        assert_eq!(t.eval(1.1), 0.0);
        assert_eq!(t.eval(1.0), 1.0);
    }

    #[test]
    fn dirichlet_examples() {
        let rect = Taper::rectangular();
        let d0 = rect.dirichlet_kernel(1, 4, 0.0);
        assert_abs_diff_eq!(d0.re, 4.0, epsilon = 1e-14);
        let d = rect.dirichlet_kernel(1, 4, PI / 2.0);
        assert!(d.norm() < 1e-14);

        let tukey = Taper::tukey_hanning();
        let direct: f64 = (1..=8)
            .map(|t| (0.5 * (1.0 - (PI * t as f64 / 8.0).cos())).powi(2))
            .sum();
        let k = tukey.dirichlet_kernel(2, 8, 0.0);
        assert_abs_diff_eq!(k.re, direct, epsilon = 1e-13);
        assert_abs_diff_eq!(k.im, 0.0, epsilon = 1e-13);
    }

    #[test]
    fn dirichlet_at_zero_approaches_t_times_moment() {
        for taper in [Taper::rectangular(), Taper::linear(), Taper::tukey_hanning()] {
            for k in 1..=4 {
                let ratio = taper.dirichlet_at_zero(k, 1024) / 1024.0;
                let rel = (ratio - taper.moment(k)).abs() / taper.moment(k);
                assert!(rel < 0.01, "{} k={k}: rel={rel}", taper.name());
            }
        }
    }

    #[test]
    fn fejer_examples() {
        for taper in [Taper::rectangular(), Taper::linear(), Taper::tukey_hanning()] {
            let v = taper.fejer_kernel(2, 16, &[0.0]).unwrap();
            let h1 = taper.dirichlet_at_zero(1, 16);
            let h2 = taper.dirichlet_at_zero(2, 16);
            assert_abs_diff_eq!(v, h1 * h1 / (2.0 * PI * h2), epsilon = 1e-12);
            assert!(v > 0.0);
        }
        let rect = Taper::rectangular();
        assert_abs_diff_eq!(rect.fejer_kernel(2, 4, &[PI / 2.0]).unwrap(), 0.0, epsilon = 1e-14);
        assert!(matches!(
            rect.fejer_kernel(4, 4, &[0.0, 0.0, 0.0]),
            Err(Error::UnsupportedArity(4))
        ));
    }

    #[test]
    fn fejer_three_at_origin() {
        let t = Taper::tukey_hanning();
        let v = t.fejer_kernel(3, 32, &[0.0, 0.0]).unwrap();
        let h1 = t.dirichlet_at_zero(1, 32);
        let h3 = t.dirichlet_at_zero(3, 32);
        assert_abs_diff_eq!(v, h1.powi(3) / (4.0 * PI * PI * h3), epsilon = 1e-10);
    }

    #[test]
    fn names_round_trip() {
        for n in ["rect", "linear", "tukey"] {
            assert_eq!(Taper::from_name(n).unwrap().name(), n);
        }
        assert!(Taper::from_name("kaiser").is_err());
    }
}
