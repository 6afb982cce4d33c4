//! Fixtures shared by the benchmarks.

use taperspec::{NoiseDriver, SpectralModel};

/// Gaussian AR(1) sample with `theta = 0.5`.
pub fn ar1_series(len: usize, seed: u64) -> Vec<f64> {
    SpectralModel::ar1(0.5, 1.0)
        .and_then(|m| m.simulate(NoiseDriver::Gaussian, len, seed))
        .map(|s| s.values)
        .expect("valid AR(1) fixture")
}
