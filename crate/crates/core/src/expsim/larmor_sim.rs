use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::substream;
use crate::error::{require_nonnegative, require_positive, Error, Result};
use crate::larmor::{
    evolve, kappa_prime_two_transition, mean_populations, populations, DecayModel, FieldConfig, SpinMixture,
    TwoTransitionConfig,
};
use crate::trace::{Axis, ScanTrace, TraceKind};

/// Probe settings for a Larmor-precession readout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LarmorProbe {
    /// Couplings and detunings; the ion numbers are replaced by
    /// `n_total` times the evolving substate populations.
    pub couplings: TwoTransitionConfig,
    pub n_total: f64,
    /// Dipole decay rate entering κ′ (rad/s).
    pub gamma: f64,
    /// Empty-cavity field decay rate (rad/s).
    pub kappa: f64,
    pub decay: DecayModel,
    /// Standard deviation of the Gaussian readout noise on C.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl LarmorProbe {
    pub fn validate(&self) -> Result<()> {
        self.couplings.validate()?;
        require_nonnegative("ion number", self.n_total)?;
        require_positive("gamma", self.gamma)?;
        require_positive("kappa", self.kappa)?;
        require_nonnegative("readout noise", self.noise_sigma)?;
        self.decay.validate()
    }
}

/// C(τ) = (κ′(τ)/κ − 1)/2 after free precession for τ. The decay envelope
/// damps the populations toward their precession average.
pub fn simulate_larmor(initial: &SpinMixture, f: &FieldConfig, probe: &LarmorProbe, taus: &[f64]) -> Result<ScanTrace> {
    probe.validate()?;
    if taus.is_empty() {
        return Err(Error::EmptyTrace("larmor trace needs at least one delay".into()));
    }
    if taus.windows(2).any(|w| w[1] <= w[0]) || taus[0] < 0.0 {
        return Err(Error::domain("delays must be nonnegative and strictly increasing"));
    }
    let mean = mean_populations(initial, f);
    let normal = Normal::new(0.0, probe.noise_sigma).expect("finite sigma");
    let mut rng = substream(probe.seed, 0);
    let y: Vec<f64> = taus
        .iter()
        .map(|&tau| {
            let mut p = [0.0; 4];
            for (w, s) in &initial.components {
                for (pm, q) in p.iter_mut().zip(populations(&evolve(s, f, tau))) {
                    *pm += w * q;
                }
            }
            let env = probe.decay.envelope(tau);
            let damped: [f64; 4] = std::array::from_fn(|m| mean[m] + (p[m] - mean[m]) * env);
            let cfg = probe.couplings.with_populations(probe.n_total, &damped);
            let c = (kappa_prime_two_transition(&cfg, probe.gamma, probe.kappa) / probe.kappa - 1.0) / 2.0;
            if probe.noise_sigma > 0.0 {
                c + normal.sample(&mut rng)
            } else {
                c
            }
        })
        .collect();
    let trace = ScanTrace::new(taus.to_vec(), y, Axis::Time, TraceKind::Normalized)?
        .with_provenance(probe.seed, "simulated Larmor precession readout");
    if probe.noise_sigma > 0.0 {
        trace.with_sigma(vec![probe.noise_sigma; taus.len()])
    } else {
        Ok(trace)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::larmor::{fit_harmonics, larmor_frequency, SpinState};
    use crate::units::{khz, mhz};

    fn probe() -> LarmorProbe {
        let g = mhz(0.53);
        LarmorProbe {
            couplings: TwoTransitionConfig {
                g_half: g / 3f64.sqrt(),
                g_threehalf: g,
                delta_half: 0.0,
                delta_threehalf: 0.0,
                n_half: 0.0,
                n_threehalf: 0.0,
            },
            n_total: 500.0,
            gamma: mhz(11.9),
            kappa: mhz(2.18),
            decay: DecayModel::none(),
            noise_sigma: 0.0,
            seed: 1,
        }
    }

    fn taus() -> Vec<f64> {
        (0..=120).map(|i| i as f64 * 1e-6).collect()
    }

    #[test]
    fn no_transverse_field_is_constant() {
        let f = FieldConfig::from_rates(0.0, khz(150.0));
        let tr = simulate_larmor(&SpinMixture::stretched_pair(), &f, &probe(), &taus()).unwrap();
        assert!(tr.y.iter().all(|&c| (c - tr.y[0]).abs() < 1e-12));
    }

    #[test]
    fn zero_delay_is_the_static_cooperativity() {
        let f = FieldConfig::from_rates(khz(30.0), khz(150.0));
        let init = SpinMixture::pure(SpinState::basis(1.5).unwrap());
        let p = probe();
        let tr = simulate_larmor(&init, &f, &p, &taus()).unwrap();
        let cfg = p.couplings.with_populations(p.n_total, &init.populations());
        let c0 = (kappa_prime_two_transition(&cfg, p.gamma, p.kappa) / p.kappa - 1.0) / 2.0;
        assert!((tr.y[0] - c0).abs() < 1e-12);
    }

    #[test]
    fn noiseless_stretched_pair_has_two_harmonics() {
        let f = FieldConfig::from_rates(khz(80.0), khz(150.0));
        let tr = simulate_larmor(&SpinMixture::stretched_pair(), &f, &probe(), &taus()).unwrap();
        let fit = fit_harmonics(&tr.x, &tr.y, larmor_frequency(&f)).unwrap();
        assert!(fit.rms_residual < 1e-9);
        assert!(fit.other_harmonics < 1e-9);
    }

    #[test]
    fn noise_is_reproducible() {
        let f = FieldConfig::from_rates(khz(80.0), khz(150.0));
        let p = LarmorProbe { noise_sigma: 0.02, ..probe() };
        let a = simulate_larmor(&SpinMixture::stretched_pair(), &f, &p, &taus()).unwrap();
        let b = simulate_larmor(&SpinMixture::stretched_pair(), &f, &p, &taus()).unwrap();
        assert_eq!(a.y, b.y);
        assert_eq!(a.sigma.as_ref().unwrap()[0], 0.02);
    }
}
