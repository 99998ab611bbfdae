use proptest::prelude::*;

use ccqed::cqed::{cooperativity, effective_response, reflectivity_at, CavityParams, CavityRates, CoupledSystem};
use ccqed::estimate::{fit_nls, FitProblem};
use ccqed::expsim::{simulate_locked, LockConfig, NoiseModel};
use ccqed::larmor::{
    cooperativity_trace, evolve, hamiltonian, kappa_prime_two_transition, larmor_period, populations, propagator,
    DecayModel, FieldConfig, SpinState, TwoTransitionConfig,
};
use ccqed::motion::{thermal_response, xi, ThermalConfig};
use ccqed::units::{khz, mhz, parse_quantity, Dimension, CA40_MASS};
use nalgebra::Matrix4;
use num_complex::Complex64;

fn rates() -> CavityRates {
    CavityParams::reference().rates().unwrap()
}

fn system() -> impl Strategy<Value = CoupledSystem> {
    (0.05f64..2.0, 0.0f64..3000.0, 5.0f64..30.0)
        .prop_map(|(g, n, gamma)| CoupledSystem::new(mhz(g), n, mhz(gamma), rates()).unwrap())
}

fn field() -> impl Strategy<Value = FieldConfig> {
    (-300.0f64..300.0, -300.0f64..300.0).prop_map(|(x, z)| FieldConfig::from_rates(khz(x), khz(z)))
}

fn spin_state() -> impl Strategy<Value = SpinState> {
    prop::array::uniform8(-1.0f64..1.0)
        .prop_filter("non-zero", |a| a.iter().any(|v| v.abs() > 1e-3))
        .prop_map(|a| SpinState::new(std::array::from_fn(|i| Complex64::new(a[2 * i], a[2 * i + 1]))).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn kappa_prime_even_and_shift_odd(sys in system(), d in -60.0f64..60.0, dc in -60.0f64..60.0) {
        let (d, dc) = (mhz(d), mhz(dc));
        let p = effective_response(&sys, d, dc);
        let m = effective_response(&sys, -d, dc);
        prop_assert!((p.kappa_prime - m.kappa_prime).abs() <= 1e-12 * p.kappa_prime);
        let shift_p = p.delta_c_prime - dc;
        let shift_m = m.delta_c_prime - dc;
        prop_assert!((shift_p + shift_m).abs() <= 1e-12 * (shift_p.abs() + sys.rates.kappa));
    }

    #[test]
    fn resonant_kappa_prime_is_cooperativity(sys in system()) {
        let k = effective_response(&sys, 0.0, 0.0).kappa_prime;
        let expect = sys.rates.kappa * (1.0 + 2.0 * cooperativity(&sys));
        prop_assert!((k - expect).abs() <= 4.0 * f64::EPSILON * expect);
    }

    #[test]
    fn reflectivity_is_bounded(sys in system(), d in -100.0f64..100.0, dc in -100.0f64..100.0) {
        let r = reflectivity_at(&sys, mhz(d), mhz(dc));
        prop_assert!((0.0..=1.0 + 1e-12).contains(&r));
    }

    #[test]
    fn coupling_scales_as_root_n(g in 0.1f64..2.0, n in 1.0f64..5000.0) {
        let s = CoupledSystem::new(mhz(g), n, mhz(11.9), rates()).unwrap();
        prop_assert!((s.g_n() / (mhz(g) * n.sqrt()) - 1.0).abs() < 1e-14);
        prop_assert!((s.g_n_sq() - s.g_n().powi(2)).abs() <= 1e-12 * s.g_n_sq());
    }

    #[test]
    fn hamiltonian_is_hermitian_and_traceless(f in field()) {
        let h = hamiltonian(&f);
        prop_assert!((h - h.transpose()).abs().max() == 0.0);
        prop_assert!(h.trace().abs() <= 1e-9 * (f.omega_x.abs() + f.omega_z.abs() + 1.0));
    }

    #[test]
    fn propagator_is_unitary(f in field(), tau in 0.0f64..1e-3) {
        let u = propagator(&f, tau);
        let err = (u.adjoint() * u - Matrix4::<Complex64>::identity()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        prop_assert!(err <= 1e-12, "‖U†U − I‖ = {err}");
    }

    #[test]
    fn populations_sum_to_one_after_chains(s in spin_state(), fs in prop::collection::vec((field(), 0.0f64..2e-4), 1..6)) {
        let mut psi = s;
        for (f, tau) in &fs {
            psi = evolve(&psi, f, *tau);
            let total: f64 = populations(&psi).iter().sum();
            prop_assert!((total - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn evolution_composes(s in spin_state(), f in field(), t1 in 0.0f64..1e-4, t2 in 0.0f64..1e-4) {
        let a = evolve(&evolve(&s, &f, t1), &f, t2);
        let b = evolve(&s, &f, t1 + t2);
        for (x, y) in a.amplitudes.iter().zip(&b.amplitudes) {
            prop_assert!((x - y).norm() < 1e-10);
        }
    }

    #[test]
    fn two_transition_is_linear_and_reduces(
        g1 in 0.1f64..1.0, g3 in 0.1f64..1.0, d1 in -30.0f64..30.0, d3 in -30.0f64..30.0,
        n1 in 0.0f64..1000.0, n3 in 0.0f64..1000.0, scale in 0.0f64..3.0,
    ) {
        let (gamma, kappa) = (mhz(11.9), mhz(2.18));
        let cfg = TwoTransitionConfig {
            g_half: mhz(g1), g_threehalf: mhz(g3), delta_half: mhz(d1), delta_threehalf: mhz(d3),
            n_half: n1, n_threehalf: n3,
        };
        let excess = |c: &TwoTransitionConfig| kappa_prime_two_transition(c, gamma, kappa) - kappa;
        let scaled = TwoTransitionConfig { n_half: n1 * scale, n_threehalf: n3 * scale, ..cfg };
        prop_assert!((excess(&scaled) - scale * excess(&cfg)).abs() <= 1e-9 * (1.0 + excess(&cfg)));
        let only3 = TwoTransitionConfig { n_half: 0.0, ..cfg };
        let single = CoupledSystem::new(mhz(g3), n3, gamma, CavityRates { kappa, ..rates() }).unwrap();
        let k1 = effective_response(&single, mhz(d3), 0.0).kappa_prime;
        prop_assert!((kappa_prime_two_transition(&only3, gamma, kappa) - k1).abs() <= 1e-9 * k1);
    }

    #[test]
    fn undamped_cooperativity_is_periodic(a in -1.0f64..1.0, b in -1.0f64..1.0, c in 0.0f64..3.0, f in field(), t in 0.0f64..1e-4) {
        prop_assume!(f.omega_x.hypot(f.omega_z) > khz(1.0));
        let wl = f.omega_x.hypot(f.omega_z);
        let period = larmor_period(&f);
        let y = cooperativity_trace(a, b, c, wl, &DecayModel::none(), &[t, t + period]);
        prop_assert!((y[0] - y[1]).abs() < 1e-9);
    }

    #[test]
    fn xi_is_even(v in -50.0f64..50.0, gamma in 1e6f64..1e8, delta in -1e8f64..1e8) {
        let k = 2.0 * std::f64::consts::PI / 866e-9;
        prop_assert_eq!(xi(v, gamma, delta, k), xi(-v, gamma, delta, k));
    }

    #[test]
    fn quantity_parsing_matches_helpers(v in -1e3f64..1e3) {
        let text = format!("{v} MHz");
        prop_assert!((parse_quantity(&text, Dimension::Frequency, false).unwrap() - mhz(v)).abs() <= 1e-9 * mhz(v).abs());
        let ang = parse_quantity(&text, Dimension::Frequency, true).unwrap();
        prop_assert!((ang - v * 1e6).abs() <= 1e-9 * (v * 1e6).abs());
    }

    #[test]
    fn lm_recovers_noiseless_lorentzian(center in -5.0f64..5.0, width in 0.5f64..5.0, depth in 0.1f64..0.9) {
        let x: Vec<f64> = (0..81).map(|i| -20.0 + 0.5 * i as f64).collect();
        let model = |x: f64, p: &[f64]| 1.0 - p[2] * p[1] * p[1] / (p[1] * p[1] + (x - p[0]).powi(2));
        let y: Vec<f64> = x.iter().map(|&v| model(v, &[center, width, depth])).collect();
        // start from the deepest sample, as the dip fitter does
        let lo = (0..y.len()).min_by(|&a, &b| y[a].total_cmp(&y[b])).unwrap();
        let start = vec![x[lo], 2.0, 1.0 - y[lo]];
        let problem = FitProblem::new("lorentzian", model, x, y, start);
        let r = fit_nls(&problem).unwrap();
        prop_assert!(r.converged);
        // the model only sees the width squared
        let got = [r.params[0], r.params[1].abs(), r.params[2]];
        for (got, want) in got.iter().zip([center, width, depth]) {
            prop_assert!((got - want).abs() < 1e-6, "{:?}", r.params);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn thermal_parity(sys in system(), d in 0.5f64..60.0, dc in -20.0f64..20.0, t in 1e-3f64..0.1) {
        let th = ThermalConfig::new(t, CA40_MASS, 866e-9).unwrap();
        let (d, dc) = (mhz(d), mhz(dc));
        let p = thermal_response(&sys, d, dc, &th).unwrap();
        let m = thermal_response(&sys, -d, dc, &th).unwrap();
        prop_assert!((p.kappa_prime - m.kappa_prime).abs() <= 1e-9 * p.kappa_prime);
        let (sp, sm) = (p.delta_c_prime - dc, m.delta_c_prime - dc);
        prop_assert!((sp + sm).abs() <= 1e-9 * (sp.abs() + sys.rates.kappa));
    }

    #[test]
    fn locked_spectra_are_deterministic(seed in 0u64..1000, n in 0.0f64..1500.0) {
        let sys = CoupledSystem::new(mhz(0.53), n, mhz(11.9), rates()).unwrap();
        let grid: Vec<f64> = (-5..=5).map(|i| mhz(4.0 * i as f64)).collect();
        let lock = LockConfig { n_sequences: 500, ..LockConfig::default() };
        let noise = NoiseModel::default().with_seed(seed);
        let a = simulate_locked(&sys, &grid, &lock, &noise).unwrap();
        let b = simulate_locked(&sys, &grid, &lock, &noise).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn zero_threshold_keeps_every_sequence(seed in 0u64..1000) {
        // with no jitter and no threshold the mean is unbiased
        let sys = CoupledSystem::new(mhz(0.53), 520.0, mhz(11.9), rates()).unwrap();
        let lock = LockConfig { n_sequences: 20_000, lock_jitter: 0.0, ..LockConfig::default() };
        let noise = NoiseModel { reference_threshold: 0.0, drift: 0.0, ..NoiseModel::default() }.with_seed(seed);
        let grid = [0.0, mhz(12.0)];
        let tr = simulate_locked(&sys, &grid, &lock, &noise).unwrap();
        let sig = tr.sigma.clone().unwrap();
        for ((&x, &y), s) in tr.x.iter().zip(&tr.y).zip(sig) {
            let r = reflectivity_at(&sys, x, x);
            prop_assert!((y - r).abs() < 5.0 * s, "{x}: {y} vs {r} ± {s}");
        }
    }
}
