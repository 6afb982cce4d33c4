//! Quadrature on `[-π, π]` for spectral integrands.
//!
//! Smooth integrands use composite Gauss–Legendre; integrands with an integrable power
//! singularity at `λ = 0` (long memory) use a geometrically graded mesh toward the origin,
//! which also detects divergence from the decay rate of successive panels.

use crate::error::{Error, Result};
use std::f64::consts::PI;
use std::sync::OnceLock;

const GL_ORDER: usize = 20;

fn gauss_legendre() -> &'static (Vec<f64>, Vec<f64>) {
    static NODES: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    NODES.get_or_init(|| {
        let n = GL_ORDER;
        let mut x = vec![0.0; n];
        let mut w = vec![0.0; n];
        for i in 0..n {
            // Chebyshev initial guess, refined by Newton on P_n.
            let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            loop {
                let (mut p0, mut p1) = (1.0, z);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                let dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
                let dz = p1 / dp;
                z -= dz;
                if dz.abs() < 1e-15 {
                    let (mut q0, mut q1) = (1.0, z);
                    for k in 2..=n {
                        let q2 = ((2 * k - 1) as f64 * z * q1 - (k - 1) as f64 * q0) / k as f64;
                        q0 = q1;
                        q1 = q2;
                    }
                    let dq = n as f64 * (z * q1 - q0) / (z * z - 1.0);
                    x[i] = z;
                    w[i] = 2.0 / ((1.0 - z * z) * dq * dq);
                    break;
                }
            }
        }
        (x, w)
    })
}

/// One Gauss–Legendre panel on `[a, b]`.
pub fn gl_panel<F: Fn(f64) -> f64 + ?Sized>(f: &F, a: f64, b: f64) -> f64 {
    let (x, w) = gauss_legendre();
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    x.iter()
        .zip(w)
        .map(|(xi, wi)| wi * f(mid + half * xi))
        .sum::<f64>()
        * half
}

pub fn composite_gl<F: Fn(f64) -> f64 + ?Sized>(f: &F, a: f64, b: f64, panels: usize) -> f64 {
    let panels = panels.max(1);
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|i| gl_panel(f, a + i as f64 * h, a + (i + 1) as f64 * h))
        .sum()
}

/// Adaptive Simpson rule with absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn step<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    step(f, a, b, fa, fm, fb, whole, tol, 48)
}

/// Options for [`spectral_integral`].
#[derive(Debug, Clone, Default)]
pub struct SpectralQuad {
    /// Use the graded mesh toward `λ = 0`.
    pub singular_at_zero: bool,
    /// Discontinuity points in `(-π, π)`; intervals are split there.
    pub breakpoints: Vec<f64>,
    /// Largest angular frequency present in the integrand (e.g. the lag of `cos(uλ)`).
    pub oscillation: f64,
}

impl SpectralQuad {
    pub fn smooth() -> Self {
        Self::default()
    }

    pub fn singular() -> Self {
        Self {
            singular_at_zero: true,
            ..Self::default()
        }
    }

    pub fn with_breakpoints(mut self, points: impl IntoIterator<Item = f64>) -> Self {
        self.breakpoints.extend(points);
        self
    }

    pub fn with_oscillation(mut self, omega: f64) -> Self {
        self.oscillation = self.oscillation.max(omega.abs());
        self
    }
}

fn panels_for(width: f64, oscillation: f64) -> usize {
    // About four Gauss-Legendre panels of 20 nodes per oscillation period.
    let base = (width / (PI / 8.0)).ceil() as usize;
    let osc = (width * (oscillation + 1.0) / (PI / 2.0)).ceil() as usize;
    base.max(osc).max(1)
}

/// Integral over `[a, b]` of a function with a possible power singularity at `a`.
fn graded_toward_left<F: Fn(f64) -> f64 + ?Sized>(
    f: &F,
    a: f64,
    b: f64,
    oscillation: f64,
) -> Result<f64> {
    const MAX_LEVELS: usize = 1000;
    let mut total = 0.0;
    let mut prev: Option<f64> = None;
    let mut small_run = 0;
    let mut width = b - a;
    for level in 0..MAX_LEVELS {
        let hi = a + width;
        let lo = a + 0.5 * width;
        let part = composite_gl(f, lo, hi, panels_for(hi - lo, oscillation));
        if !part.is_finite() {
            return Err(Error::Divergence(format!(
                "non-finite integrand near the singular point {a}"
            )));
        }
        total += part;
        if part.abs() <= 1e-16 * total.abs().max(f64::MIN_POSITIVE) {
            small_run += 1;
            if small_run >= 3 {
                return Ok(total);
            }
        } else {
            small_run = 0;
        }
        if level + 1 == MAX_LEVELS {
            // The panels shrink geometrically in width; a power law integrand gives a
            // geometric sequence of contributions whose ratio decides convergence.
            let ratio = prev.map(|p| part / p).unwrap_or(0.0);
            if !(ratio.abs() < 0.999) {
                return Err(Error::Divergence(format!(
                    "panel contributions do not decay near {a} (ratio {ratio:.6})"
                )));
            }
            return Ok(total + part * ratio / (1.0 - ratio));
        }
        prev = Some(part);
        width *= 0.5;
    }
    Ok(total)
}

/// `∫_{-π}^{π} f(λ) dλ` with the splitting, grading and oscillation handling of `opts`.
pub fn spectral_integral<F: Fn(f64) -> f64 + ?Sized>(f: &F, opts: &SpectralQuad) -> Result<f64> {
    integrate_between(f, -PI, PI, opts)
}

/// Same as [`spectral_integral`] on a sub-interval `[lo, hi] ⊂ [-π, π]`.
pub fn integrate_between<F: Fn(f64) -> f64 + ?Sized>(
    f: &F,
    lo: f64,
    hi: f64,
    opts: &SpectralQuad,
) -> Result<f64> {
    if hi <= lo {
        return Ok(0.0);
    }
    let mut cuts: Vec<f64> = vec![lo, hi];
    if lo < 0.0 && hi > 0.0 {
        cuts.push(0.0);
    }
    cuts.extend(opts.breakpoints.iter().copied().filter(|&b| b > lo && b < hi));
    cuts.sort_by(|a, b| a.partial_cmp(b).expect("finite breakpoints"));
    cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-15);

    let mut total = 0.0;
    for pair in cuts.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let part = if opts.singular_at_zero && a == 0.0 {
            graded_toward_left(f, a, b, opts.oscillation)?
        } else if opts.singular_at_zero && b == 0.0 {
            let g = |x: f64| f(-x);
            graded_toward_left(&g, 0.0, -a, opts.oscillation)?
        } else {
            composite_gl(f, a, b, panels_for(b - a, opts.oscillation))
        };
        if !part.is_finite() {
            return Err(Error::Divergence(format!("non-finite integral on [{a}, {b}]")));
        }
        total += part;
    }
    Ok(total)
}
