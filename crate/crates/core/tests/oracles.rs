mod common;

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ccqed::cqed::{reflectivity_at, CavityParams, CoupledSystem};
use ccqed::crystal::{effective_ion_count, CrystalSpec, ModeGeometry};
use ccqed::expsim::{simulate_scan, NoiseModel, ScanConfig, SequenceTiming};
use ccqed::larmor::{evolve, larmor_frequency, populations, FieldConfig, SpinState};
use ccqed::motion::{thermal_averages, thermal_response, ThermalConfig};
use ccqed::units::{khz, mhz, CA40_MASS};
use num_complex::Complex64;

use common::{adaptive_simpson, binomial_rotation, monte_carlo_ion_count, power_spectrum, thermal_oracle};

fn reference_system(n: f64) -> CoupledSystem {
    CoupledSystem::new(mhz(0.53), n, mhz(11.2), CavityParams::reference().rates().unwrap()).unwrap()
}

#[test]
fn crystal_quadrature_matches_monte_carlo() {
    let mode = ModeGeometry::reference();
    let crystals = [
        CrystalSpec::reference(),
        CrystalSpec { offset_x: 0.0, offset_y: 0.0, ..CrystalSpec::reference() },
        CrystalSpec { half_length: 1.2e-3, radius: 40e-6, offset_x: 10e-6, offset_y: -5e-6, ..CrystalSpec::reference() },
    ];
    for (i, c) in crystals.iter().enumerate() {
        let n = effective_ion_count(c, &mode).unwrap();
        let (mc, se) = monte_carlo_ion_count(c, &mode, 2_000_000, 17 + i as u64);
        assert!(se / mc < 1e-3, "Monte-Carlo error too large: {se} on {mc}");
        assert!((n / mc - 1.0).abs() < 5e-3, "crystal {i}: quadrature {n} vs Monte Carlo {mc} ± {se}");
    }
}

#[test]
fn thermal_quadrature_matches_direct_integration() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..20 {
        let gamma = mhz(rng.random_range(5.0..20.0));
        let delta = mhz(rng.random_range(-40.0..40.0));
        let t = rng.random_range(1e-3..0.1);
        let th = ThermalConfig::new(t, CA40_MASS, 866e-9).unwrap();
        let (a, d) = thermal_averages(gamma, delta, &th).unwrap();
        let (ao, dorc) = thermal_oracle(gamma, delta, th.wavenumber, th.doppler_velocity());
        let scale = ao.abs().max(dorc.abs());
        assert!((a - ao).abs() <= 1e-6 * ao.abs(), "absorption {a} vs {ao} (T={t}, delta={delta})");
        assert!((d - dorc).abs() <= 1e-6 * scale, "dispersion {d} vs {dorc} (T={t}, delta={delta})");
    }
}

#[test]
fn thermal_absorption_area_is_temperature_independent() {
    let sys = reference_system(520.0);
    let area = |t: f64| {
        let th = ThermalConfig::new(t, CA40_MASS, 866e-9).unwrap();
        let f = |d: f64| thermal_response(&sys, d, 0.0, &th).unwrap().kappa_prime - sys.rates.kappa;
        let lim = mhz(20_000.0);
        adaptive_simpson(&f, -lim, 0.0, 1e-9 * sys.g_n_sq()) + adaptive_simpson(&f, 0.0, lim, 1e-9 * sys.g_n_sq())
    };
    let cold = area(0.0);
    // ∫ g²N γ/(γ² + Δ²) dΔ over the finite range
    let exact = sys.g_n_sq() * 2.0 * (mhz(20_000.0) / sys.gamma_eff).atan();
    assert!((cold / exact - 1.0).abs() < 1e-7, "{cold} vs {exact}");
    for t in [0.024, 0.1] {
        let hot = area(t);
        assert!((hot / cold - 1.0).abs() < 1e-5, "T={t}: {hot} vs {cold}");
    }
}

#[test]
fn pure_transverse_rotation_is_binomial() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let wx = khz(100.0);
    let f = FieldConfig::from_rates(wx, 0.0);
    let s = SpinState::basis(1.5).unwrap();
    for _ in 0..100 {
        let tau = rng.random_range(0.0..50e-6);
        let p = populations(&evolve(&s, &f, tau));
        let oracle = binomial_rotation(wx * tau);
        for m in 0..4 {
            assert!((p[m] - oracle[m]).abs() < 1e-9, "tau={tau}: {p:?} vs {oracle:?}");
        }
    }
}

fn spectrum_outside(traces: &[[f64; 4]], allowed: &[usize]) -> Vec<(f64, f64)> {
    (0..4)
        .map(|m| {
            let y: Vec<f64> = traces.iter().map(|p| p[m]).collect();
            let power = power_spectrum(&y);
            let total: f64 = power.iter().sum();
            let stray = power.iter().enumerate().filter(|(k, _)| !allowed.contains(k)).map(|(_, p)| p).sum();
            (stray, total)
        })
        .collect()
}

fn sampled_periods(f: &FieldConfig, periods: usize, n: usize) -> Vec<f64> {
    let t_total = periods as f64 * 2.0 * PI / larmor_frequency(f);
    (0..n).map(|i| t_total * i as f64 / n as f64).collect()
}

#[test]
fn stretched_pair_spectra_contain_only_larmor_harmonics() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (periods, n) = (8, 128);
    for _ in 0..10 {
        let f = FieldConfig::from_rates(khz(rng.random_range(10.0..200.0)), khz(rng.random_range(-200.0..200.0)));
        let taus = sampled_periods(&f, periods, n);
        let traces: Vec<[f64; 4]> = taus
            .iter()
            .map(|&t| {
                let up = populations(&evolve(&SpinState::basis(1.5).unwrap(), &f, t));
                let down = populations(&evolve(&SpinState::basis(-1.5).unwrap(), &f, t));
                std::array::from_fn(|m| 0.5 * (up[m] + down[m]))
            })
            .collect();
        for (m, (stray, total)) in spectrum_outside(&traces, &[0, periods, 2 * periods]).into_iter().enumerate() {
            assert!(stray <= 1e-20 * total, "m index {m}: stray power {stray} of {total}");
        }
    }
}

#[test]
fn generic_states_reach_the_third_harmonic_at_most() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let (periods, n) = (8, 128);
    let mut third = 0.0f64;
    for _ in 0..10 {
        let f = FieldConfig::from_rates(khz(rng.random_range(10.0..200.0)), khz(rng.random_range(-200.0..200.0)));
        let amps = std::array::from_fn(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let s = SpinState::new(amps).unwrap();
        let taus = sampled_periods(&f, periods, n);
        let traces: Vec<[f64; 4]> = taus.iter().map(|&t| populations(&evolve(&s, &f, t))).collect();
        for (stray, total) in spectrum_outside(&traces, &[0, periods, 2 * periods, 3 * periods]) {
            assert!(stray <= 1e-20 * total, "power beyond 3ω_L: {stray} of {total}");
        }
        for (stray, total) in spectrum_outside(&traces, &[0, periods, 2 * periods]) {
            third = third.max(stray / total);
        }
    }
    // spin 3/2 level spacings allow 3ω_L; pure states generally show it
    assert!(third > 1e-6);
}

fn flat_scan(rate: f64, seed: u64) -> (ccqed::trace::ScanTrace, f64, CoupledSystem) {
    let sys = reference_system(0.0);
    let scan = ScanConfig { window: mhz(0.01), samples_per_scan: 10_001, n_average: 1, ..ScanConfig::default() };
    let timing = SequenceTiming::default();
    let noise = NoiseModel { mean_photon_rate: rate, drift: 0.0, ..NoiseModel::default() }.with_seed(seed);
    let unit = noise.detected_rate() * scan.exposure(&timing);
    (simulate_scan(&sys, 0.0, &scan, &timing, &noise).unwrap(), unit, sys)
}

#[test]
fn scan_counts_have_poisson_variance() {
    let (tr, unit, _) = flat_scan(4e14, 3);
    let n = tr.y.len() as f64;
    let mean = tr.y.iter().sum::<f64>() / n;
    let var = tr.y.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (n - 1.0);
    assert!(mean > 5.0, "mean {mean} (unit {unit})");
    assert!((var / mean - 1.0).abs() < 0.05, "mean {mean}, variance {var}");
}

#[test]
fn large_count_means_follow_the_reflectivity() {
    let sys = reference_system(520.0);
    let scan = ScanConfig::default();
    let timing = SequenceTiming::default();
    // ≈10⁶ detected counts per sample and scan at unit reflectivity
    let per_rate = 0.16 * scan.exposure(&timing);
    let noise = NoiseModel { mean_photon_rate: 1e6 / per_rate, drift: 0.0, ..NoiseModel::default() }.with_seed(8);
    let tr = simulate_scan(&sys, mhz(10.0), &scan, &timing, &noise).unwrap();
    let unit = noise.detected_rate() * scan.exposure(&timing);
    assert!((unit / 1e6 - 1.0).abs() < 1e-9);
    for (&x, &y) in tr.x.iter().zip(&tr.y) {
        let r = reflectivity_at(&sys, mhz(10.0), x);
        assert!((y / unit / r - 1.0).abs() < 5e-3, "detuning {x}: {} vs {r}", y / unit);
    }
}
