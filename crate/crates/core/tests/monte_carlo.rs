//! Monte Carlo properties that need more replications than the module tests.

use nalgebra::DMatrix;
use proptest::prelude::*;
use taperspec::functionals::{
    default_periodogram, plugin_value, taper_autocorrelation, true_functional,
};
use taperspec::gof::{mixture_weights, simple_test, BasisSpec};
use taperspec::robustness::{gap_ladder, RobustnessConfig, RobustnessTarget, Trend};
use taperspec::stats::{mean, median, se_mean};
use taperspec::whittle::{whittle_estimate, WhittleConfig};
use taperspec::{GeneratingFunction, NoiseDriver, SpectralModel, Taper};

fn ar1() -> SpectralModel {
    SpectralModel::ar1(0.5, 1.0).unwrap()
}

/// `E J_T^h` for `g = cos(λ)`, exact in the lag domain.
fn expected_cos_functional(model: &SpectralModel, taper: &Taper, len: usize) -> f64 {
    let rho = taper_autocorrelation(taper, len);
    // ĝ(±1) = π and C_T = 2π Σh², so E Q / C_T = γ(1) ρ_h(1).
    model.covariance(1).unwrap() * rho[1]
}

#[test]
fn expected_functional_bias_decreases() {
    let model = ar1();
    let g = GeneratingFunction::cosine(1);
    let truth = true_functional(&model, &g).unwrap();
    for taper in [Taper::rectangular(), Taper::tukey_hanning()] {
        let bias: Vec<f64> = [256, 1024, 4096]
            .iter()
            .map(|&t| (expected_cos_functional(&model, &taper, t) - truth).abs())
            .collect();
        assert!(bias[0] > bias[1] && bias[1] > bias[2], "{taper:?}: {bias:?}");
    }
}

#[test]
fn scaled_bias_is_within_monte_carlo_error() {
    let model = ar1();
    let taper = Taper::tukey_hanning();
    let g = GeneratingFunction::cosine(1);
    let truth = true_functional(&model, &g).unwrap();
    let len = 4096;
    let values: Vec<f64> = (0..2000)
        .map(|r| {
            let x = model.simulate_stream(NoiseDriver::Gaussian, len, 404, r).unwrap();
            plugin_value(&default_periodogram(&x.values, &taper, false).unwrap(), &g)
        })
        .collect();
    let root_t = (len as f64).sqrt();
    let scaled_bias = root_t * (mean(&values) - truth).abs();
    assert!(scaled_bias < 2.0 * root_t * se_mean(&values), "{scaled_bias}");
}

#[test]
fn whittle_estimates_concentrate() {
    let model = ar1();
    let taper = Taper::tukey_hanning();
    let cfg = WhittleConfig::default();
    let medians: Vec<f64> = [512, 2048, 8192]
        .iter()
        .map(|&len| {
            let errs: Vec<f64> = (0..60)
                .map(|r| {
                    let x = model.simulate_stream(NoiseDriver::Gaussian, len, 77, r).unwrap();
                    (whittle_estimate(&x.values, &taper, &model, &cfg).unwrap().theta_hat[0] - 0.5).abs()
                })
                .collect();
            median(&errs)
        })
        .collect();
    assert!(medians[0] > medians[1] && medians[1] > medians[2], "{medians:?}");
}

#[test]
fn simple_test_size_for_rectangular_and_tukey() {
    let model = ar1();
    let basis = BasisSpec::parse("cosine:3").unwrap();
    for taper in [Taper::rectangular(), Taper::tukey_hanning()] {
        let rejections = (0..5000)
            .filter(|&r| {
                let x = model.simulate_stream(NoiseDriver::Gaussian, 1024, 505, r).unwrap();
                simple_test(&x.values, &taper, &model, &basis, 0.05).unwrap().reject
            })
            .count();
        let rate = rejections as f64 / 5000.0;
        assert!((0.03..=0.07).contains(&rate), "{taper:?}: {rate}");
    }
}

#[test]
fn gap_ladders_for_admissible_and_slow_trends() {
    let base = |trend: Trend| RobustnessConfig {
        model: ar1(),
        driver: NoiseDriver::Gaussian,
        taper: Taper::tukey_hanning(),
        trend,
        target: RobustnessTarget::Functional(GeneratingFunction::cosine(1)),
        len: 512,
        reps: 200,
        seed: 606,
    };
    let lens = [512, 2048, 8192];
    for beta in [0.6, 0.8] {
        let ladder = gap_ladder(&base(Trend::power_decay(1.0, beta).unwrap()), &lens).unwrap();
        // Nonincreasing up to one Monte Carlo standard error.
        for i in 1..lens.len() {
            assert!(
                ladder.median_gap[i] <= ladder.median_gap[i - 1] + ladder.median_gap_se[i],
                "beta {beta}: {ladder:?}"
            );
        }
        assert!(ladder.shrinking);
    }
    let slow = gap_ladder(&base(Trend::slow_power(1.0, 0.1)), &lens).unwrap();
    assert!(!slow.shrinking, "{slow:?}");
}

fn spd(values: &[f64], dim: usize) -> DMatrix<f64> {
    let a = DMatrix::from_row_slice(dim, dim, &values[..dim * dim]);
    &a * a.transpose() + DMatrix::identity(dim, dim) * 0.1
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mixture_weights_stay_in_unit_interval(
        g in prop::collection::vec(-2.0f64..2.0, 9),
        b in prop::collection::vec(-3.0f64..3.0, 15),
        p in 1usize..4,
    ) {
        let gamma = spd(&g, p);
        let bm = DMatrix::from_row_slice(5, p, &b[..5 * p]);
        let w = mixture_weights(&gamma, &bm).unwrap();
        prop_assert_eq!(w.nu.len(), p);
        prop_assert!(w.nu.iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
