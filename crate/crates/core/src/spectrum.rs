//! Tapered finite Fourier transform and tapered periodogram.

use crate::error::{Error, Result};
use crate::taper::Taper;
use num_complex::Complex64;
use rustfft::FftPlanner;
use std::cell::RefCell;
use std::f64::consts::PI;
use std::io::Write;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Unnormalized forward (`e^{-2πikn/N}`) or inverse FFT using a per-thread plan cache.
pub(crate) fn fft_in_place(buf: &mut [Complex64], inverse: bool) {
    let plan = PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(buf.len())
        } else {
            p.plan_fft_forward(buf.len())
        }
    });
    plan.process(buf);
}

/// Quadrature grid on `(-π, π]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyGrid {
    points: Vec<f64>,
    weights: Vec<f64>,
    fft_size: Option<usize>,
    shifted: bool,
}

impl FrequencyGrid {
    /// `N` equispaced points `λ_j = -π + 2π(j+1)/N`, where `N` is the smallest power of two
    /// `≥ oversample · T`; each point carries weight `2π/N`. Contains `λ = 0`.
    pub fn canonical(len: usize, oversample: usize) -> Result<Self> {
        let n = Self::fft_len(len, oversample)?;
        let step = 2.0 * PI / n as f64;
        Ok(FrequencyGrid {
            points: (0..n).map(|j| -PI + step * (j + 1) as f64).collect(),
            weights: vec![step; n],
            fft_size: Some(n),
            shifted: false,
        })
    }

    /// Same resolution as [`canonical`](Self::canonical) but offset by half a step, so the grid
    /// is symmetric about zero and never evaluates a long-memory density at its pole.
    pub fn canonical_shifted(len: usize, oversample: usize) -> Result<Self> {
        let n = Self::fft_len(len, oversample)?;
        let step = 2.0 * PI / n as f64;
        Ok(FrequencyGrid {
            points: (0..n).map(|j| -PI + step * (j as f64 + 0.5)).collect(),
            weights: vec![step; n],
            fft_size: Some(n),
            shifted: true,
        })
    }

    /// Arbitrary grid; evaluated by direct summation.
    pub fn custom(points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if points.len() != weights.len() || points.is_empty() {
            return Err(Error::Shape("grid points and weights must have equal, nonzero length".into()));
        }
        if points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Shape("grid points must be strictly increasing".into()));
        }
        if points[0] <= -PI || points[points.len() - 1] > PI {
            return Err(Error::Shape("grid points must lie in (-π, π]".into()));
        }
        Ok(FrequencyGrid {
            points,
            weights,
            fft_size: None,
            shifted: false,
        })
    }

    fn fft_len(len: usize, oversample: usize) -> Result<usize> {
        if ![1, 2, 4, 8].contains(&oversample) {
            return Err(Error::Config(format!(
                "oversample must be one of 1, 2, 4, 8; got {oversample}"
            )));
        }
        if len == 0 {
            return Err(Error::Domain("grid for an empty series".into()));
        }
        Ok((oversample * len).next_power_of_two())
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn is_shifted(&self) -> bool {
        self.shifted
    }

    pub fn fft_size(&self) -> Option<usize> {
        self.fft_size
    }

    /// `Σ_j φ(λ_j) w_j`.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(&l, &w)| f(l) * w)
            .sum()
    }
}

/// `d(λ) = Σ_{t=1}^T h(t/T) X(t) e^{-iλt}` by direct summation.
pub fn tapered_dft(series: &[f64], taper: &Taper, lambda: f64) -> Complex64 {
    let len = series.len();
    series
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let t = (i + 1) as f64;
            Complex64::from_polar(taper.eval(t / len as f64) * x, -lambda * t)
        })
        .sum()
}

/// `d(λ_j)` on every point of a canonical grid via one zero-padded FFT.
pub fn tapered_dft_on_grid(series: &[f64], taper: &Taper, grid: &FrequencyGrid) -> Vec<Complex64> {
    let len = series.len();
    let Some(n) = grid.fft_size else {
        return grid
            .points
            .iter()
            .map(|&l| tapered_dft(series, taper, l))
            .collect();
    };
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for (i, &x) in series.iter().enumerate() {
        let y = taper.eval((i + 1) as f64 / len as f64) * x;
        // Bins are periodic in t with period N, so series longer than N fold exactly.
        buf[i % n] += if grid.shifted {
            Complex64::from_polar(y, -PI * i as f64 / n as f64)
        } else {
            Complex64::new(y, 0.0)
        };
    }
    fft_in_place(&mut buf, false);
    // Reorder FFT bins to the grid's (-π, π] ordering and restore the t = 1 phase origin.
    (0..n)
        .map(|j| {
            let (k, lambda) = if grid.shifted {
                ((j + n - n / 2) % n, grid.points[j])
            } else {
                ((j + 1 + n - n / 2) % n, grid.points[j])
            };
            buf[k] * Complex64::from_polar(1.0, -lambda)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Periodogram {
    grid: FrequencyGrid,
    values: Vec<f64>,
    c_t: f64,
    taper_name: String,
    len: usize,
}

impl Periodogram {
    /// Builds a periodogram from externally computed values, e.g. a synthetic `I ≡ f`.
    pub fn from_values(
        grid: FrequencyGrid,
        values: Vec<f64>,
        c_t: f64,
        taper_name: &str,
        len: usize,
    ) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Shape(format!(
                "{} values for a grid of {} points",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::Domain("periodogram values must be nonnegative".into()));
        }
        Ok(Periodogram {
            grid,
            values,
            c_t,
            taper_name: taper_name.to_string(),
            len,
        })
    }

    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `C_T = 2π Σ_{t=1}^T h²(t/T)`.
    pub fn c_t(&self) -> f64 {
        self.c_t
    }

    pub fn taper_name(&self) -> &str {
        &self.taper_name
    }

    /// Sample size `T`.
    pub fn sample_len(&self) -> usize {
        self.len
    }

    /// `Σ_j I(λ_j) φ(λ_j) w_j`.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.grid
            .points
            .iter()
            .zip(&self.grid.weights)
            .zip(&self.values)
            .map(|((&l, &w), &i)| i * f(l) * w)
            .sum()
    }

    /// CSV with header `lambda,value`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(["lambda", "value"]).map_err(io)?;
        for (l, v) in self.grid.points.iter().zip(&self.values) {
            w.write_record([format!("{l:.16e}"), format!("{v:.16e}")])
                .map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `I(λ) = |d(λ)|² / C_T` on `grid`.
pub fn tapered_periodogram(series: &[f64], taper: &Taper, grid: &FrequencyGrid) -> Result<Periodogram> {
    let len = series.len();
    if len < 2 {
        return Err(Error::Domain("periodogram needs at least two observations".into()));
    }
    let h2 = taper.dirichlet_at_zero(2, len);
    if !(h2 > 0.0) {
        return Err(Error::InvalidTaper(format!(
            "taper `{}` has Σ h²(t/T) = 0 at T = {len}",
            taper.name()
        )));
    }
    let c_t = 2.0 * PI * h2;
    let values = tapered_dft_on_grid(series, taper, grid)
        .into_iter()
        .map(|d| d.norm_sqr() / c_t)
        .collect();
    Ok(Periodogram {
        grid: grid.clone(),
        values,
        c_t,
        taper_name: taper.name().to_string(),
        len,
    })
}
