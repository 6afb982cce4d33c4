//! Frequency-domain inference for stationary time series observed through a data taper.
//!
//! The crate covers the whole pipeline from simulation to inference:
//!
//! - [`taper`]: taper functions, their moments `H_k`, the tapering factor `e(h)` and the
//!   tapered Dirichlet / Fejér-type kernels.
//! - [`models`]: parametric spectral densities (white noise, AR(1), ARMA, ARFIMA, fGn),
//!   their covariances and seeded simulators driven by Gaussian or non-Gaussian noise.
//! - [`spectrum`]: tapered finite Fourier transform and tapered periodogram.
//! - [`functionals`]: linear spectral functionals `J(f, g)`, plug-in estimators, the
//!   exact quadratic-form representation and asymptotic variances.
//! - [`toeplitz`]: tapered Toeplitz matrices, trace approximations and the exact law of
//!   Gaussian quadratic forms.
//! - [`whittle`]: tapered Whittle estimation with its asymptotic covariance.
//! - [`gof`]: goodness-of-fit tests for simple and composite spectral hypotheses.
//! - [`robustness`]: trend contamination experiments.
//! - [`harness`]: configuration, Monte Carlo engine and report emission used by the CLI.

pub mod error;
pub mod functionals;
pub mod gof;
pub mod harness;
pub mod models;
pub mod optim;
pub mod quad;
pub mod rng;
pub mod robustness;
pub mod spectrum;
pub mod stats;
pub mod taper;
pub mod toeplitz;
pub mod whittle;

pub use error::{Error, Result};
pub use functionals::{FunctionalEstimate, GeneratingFunction};
pub use gof::{GofResult, TestBasis};
pub use models::{Family, MemoryClass, NoiseDriver, SpectralModel, TimeSeries};
pub use spectrum::{FrequencyGrid, Periodogram};
pub use taper::{Taper, TaperKind};
pub use toeplitz::TaperedToeplitzMatrix;
pub use whittle::{InfoMatrices, WhittleFit};

/// An even, real function on `[-π, π]` that also exposes its Fourier coefficients
/// `ψ̂(t) = ∫ e^{iλt} ψ(λ) dλ`.
///
/// Spectral densities and generating functions both implement this, which lets the
/// functional, Toeplitz and goodness-of-fit code treat them uniformly.
pub trait EvenSpectralFunction: Sync {
    fn value(&self, lambda: f64) -> f64;

    fn fourier_coefficient(&self, lag: i64) -> Result<f64>;

    /// Whether the function may be unbounded (or vanish like a power) at `λ = 0`.
    fn singular_at_zero(&self) -> bool {
        false
    }

    /// Points in `(0, π)` where the function is discontinuous.
    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }

    fn describe(&self) -> String;
}
