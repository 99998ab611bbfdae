use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::cavity::CavityRates;
use crate::error::{require_nonnegative, require_positive, Error, Result};
use crate::trace::{Axis, ScanTrace, TraceKind};

/// Mean-field amplitude in units of the input-field amplitude.
pub type ComplexAmplitude = Complex64;

/// N effective two-level ions coupled to one cavity mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoupledSystem {
    /// Single-ion coupling g (rad/s).
    pub g: f64,
    /// Effective number of ions.
    pub n_eff: f64,
    /// Effective dipole decay rate γ′ (rad/s).
    pub gamma_eff: f64,
    pub rates: CavityRates,
}

impl CoupledSystem {
    pub fn new(g: f64, n_eff: f64, gamma_eff: f64, rates: CavityRates) -> Result<Self> {
        let s = CoupledSystem { g, n_eff, gamma_eff, rates };
        s.validate()?;
        Ok(s)
    }

    /// A system specified by its collective coupling rather than (g, N).
    pub fn from_collective(g_n: f64, gamma_eff: f64, rates: CavityRates) -> Result<Self> {
        require_nonnegative("collective coupling", g_n)?;
        CoupledSystem::new(g_n, 1.0, gamma_eff, rates)
    }

    pub fn validate(&self) -> Result<()> {
        require_nonnegative("g", self.g)?;
        require_nonnegative("effective ion number", self.n_eff)?;
        require_positive("gamma_eff", self.gamma_eff)?;
        require_positive("kappa", self.rates.kappa)?;
        Ok(())
    }

    /// Checks γ′ against the natural linewidth γ of the transition.
    pub fn validate_against(&self, gamma: f64) -> Result<()> {
        self.validate()?;
        if self.gamma_eff < gamma {
            return Err(Error::domain(format!(
                "gamma_eff ({:e}) below natural gamma ({gamma:e})",
                self.gamma_eff
            )));
        }
        Ok(())
    }

    /// g_N = g √N.
    pub fn g_n(&self) -> f64 {
        self.g * self.n_eff.sqrt()
    }

    /// g² N, the squared collective coupling.
    pub fn g_n_sq(&self) -> f64 {
        self.g * self.g * self.n_eff
    }

    pub fn with_n(self, n_eff: f64) -> Self {
        CoupledSystem { n_eff, ..self }
    }
}

/// Effective cavity decay rate κ′ and detuning Δc′ at one probe setting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoupledResponse {
    pub kappa_prime: f64,
    pub delta_c_prime: f64,
}

pub fn collective_coupling(g: f64, n_eff: f64) -> Result<f64> {
    require_nonnegative("g", g)?;
    require_nonnegative("effective ion number", n_eff)?;
    Ok(g * n_eff.sqrt())
}

/// κ′ = κ + g²N γ′/(γ′²+Δ²) and Δc′ = Δc − g²N Δ/(γ′²+Δ²).
pub fn effective_response(sys: &CoupledSystem, delta: f64, delta_c: f64) -> CoupledResponse {
    let g2n = sys.g_n_sq();
    let denom = sys.gamma_eff * sys.gamma_eff + delta * delta;
    CoupledResponse {
        kappa_prime: sys.rates.kappa + g2n * sys.gamma_eff / denom,
        delta_c_prime: delta_c - g2n * delta / denom,
    }
}

/// Steady-state intracavity field a = √(2κ1/τ) a_in / (κ′ + iΔc′).
pub fn intracavity_amplitude(
    resp: &CoupledResponse,
    rates: &CavityRates,
    a_in: ComplexAmplitude,
) -> ComplexAmplitude {
    let drive = (2.0 * rates.kappa1 / rates.tau).sqrt();
    a_in * drive / Complex64::new(resp.kappa_prime, resp.delta_c_prime)
}

/// Reflected field from the input-output relation a_r = √(2κ1τ) a − a_in.
pub fn reflected_amplitude(
    resp: &CoupledResponse,
    rates: &CavityRates,
    a_in: ComplexAmplitude,
) -> ComplexAmplitude {
    (2.0 * rates.kappa1 * rates.tau).sqrt() * intracavity_amplitude(resp, rates, a_in) - a_in
}

/// R = |(2κ1 − κ′ − iΔc′)/(κ′ + iΔc′)|².
pub fn reflectivity(rates: &CavityRates, resp: &CoupledResponse) -> f64 {
    let k = resp.kappa_prime;
    let d = resp.delta_c_prime;
    let num = (2.0 * rates.kappa1 - k).powi(2) + d * d;
    num / (k * k + d * d)
}

/// Reflectivity of the coupled system at probe detuning Δ and cavity detuning Δc.
pub fn reflectivity_at(sys: &CoupledSystem, delta: f64, delta_c: f64) -> f64 {
    reflectivity(&sys.rates, &effective_response(sys, delta, delta_c))
}

/// C = g_N² / (2κγ′).
pub fn cooperativity(sys: &CoupledSystem) -> f64 {
    sys.g_n_sq() / (2.0 * sys.rates.kappa * sys.gamma_eff)
}

/// Mean intracavity photon number for an input photon flux (photons/s).
pub fn intracavity_photons(resp: &CoupledResponse, rates: &CavityRates, input_flux: f64) -> f64 {
    // |a_in|² counts photons per round trip
    let a_in = Complex64::new((input_flux * rates.tau).sqrt(), 0.0);
    intracavity_amplitude(resp, rates, a_in).norm_sqr()
}

/// Reflectivity along the Δ = Δc diagonal (cavity locked to the atomic line).
pub fn rabi_spectrum(sys: &CoupledSystem, grid: &[f64]) -> Result<ScanTrace> {
    if grid.is_empty() {
        return Err(Error::domain("rabi spectrum needs a non-empty detuning grid"));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::domain("rabi spectrum grid must be strictly increasing"));
    }
    let y = grid.iter().map(|&d| reflectivity_at(sys, d, d)).collect();
    Ok(ScanTrace::new(grid.to_vec(), y, Axis::Detuning, TraceKind::Normalized)?
        .with_provenance(0, "model: vacuum Rabi spectrum"))
}

/// Detunings of the local reflectivity minima of a sampled curve.
pub fn local_minima(x: &[f64], y: &[f64]) -> Vec<f64> {
    (1..y.len().saturating_sub(1))
        .filter(|&i| y[i] < y[i - 1] && y[i] <= y[i + 1])
        .map(|i| x[i])
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::{mhz, to_mhz};

    fn rates(kappa1_mhz: f64, kappa_mhz: f64) -> CavityRates {
        CavityRates::from_decay(mhz(kappa1_mhz), mhz(kappa_mhz), 2.0 * 11.8e-3 / 299_792_458.0).unwrap()
    }

    fn reference_system() -> CoupledSystem {
        CoupledSystem::from_collective(mhz(12.2), mhz(11.9), rates(1.5, 2.1)).unwrap()
    }

    #[test]
    fn collective_coupling_values() {
        let gn = collective_coupling(mhz(0.53), 520.0).unwrap();
        assert!((to_mhz(gn) - 12.0857).abs() < 1e-3);
        assert_eq!(collective_coupling(mhz(0.53), 0.0).unwrap(), 0.0);
        assert!(collective_coupling(-1.0, 3.0).is_err());
    }

    #[test]
    fn on_resonance_broadening() {
        let r = effective_response(&reference_system(), 0.0, 0.0);
        // 2.1 + 12.2²/11.9
        assert!((to_mhz(r.kappa_prime) - 14.6076).abs() < 1e-3);
        assert_eq!(r.delta_c_prime, 0.0);
    }

    #[test]
    fn half_width_detuning_shift() {
        let s = reference_system();
        let r = effective_response(&s, s.gamma_eff, 0.0);
        // −g_N²/(2γ′)
        assert!((to_mhz(r.delta_c_prime) + 6.2538).abs() < 1e-3);
    }

    #[test]
    fn far_detuned_decouples() {
        let s = reference_system();
        let r = effective_response(&s, mhz(1e10), mhz(3.0));
        assert!((r.kappa_prime - s.rates.kappa).abs() / s.rates.kappa < 1e-9);
        assert!((r.delta_c_prime - mhz(3.0)).abs() / mhz(3.0) < 1e-6);
    }

    #[test]
    fn empty_cavity_reflectivity() {
        let rt = rates(1.5, 2.1);
        let resp = CoupledResponse { kappa_prime: rt.kappa, delta_c_prime: 0.0 };
        assert!((reflectivity(&rt, &resp) - (0.9f64 / 2.1).powi(2)).abs() < 1e-12);
        let far = CoupledResponse { kappa_prime: rt.kappa, delta_c_prime: mhz(1e6) };
        assert!((reflectivity(&rt, &far) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn coupled_reflectivity_on_resonance() {
        let s = reference_system();
        let r = reflectivity_at(&s, 0.0, 0.0);
        let kp = 2.1 + 12.2f64.powi(2) / 11.9;
        assert!((r - ((3.0 - kp) / kp).powi(2)).abs() < 1e-12);
        assert!((r - 0.63).abs() < 0.005);
    }

    #[test]
    fn field_amplitudes() {
        let rt = rates(1.5, 2.1);
        let empty = CoupledResponse { kappa_prime: rt.kappa, delta_c_prime: 0.0 };
        assert_eq!(intracavity_amplitude(&empty, &rt, Complex64::new(0.0, 0.0)), Complex64::new(0.0, 0.0));
        let a = intracavity_amplitude(&empty, &rt, Complex64::new(1.0, 0.0));
        let expect = 2.0 * rt.kappa1 / (rt.tau * rt.kappa * rt.kappa);
        assert!((a.norm_sqr() - expect).abs() / expect < 1e-12);

        let s = reference_system();
        let coupled = effective_response(&s, 0.0, 0.0);
        let ac = intracavity_amplitude(&coupled, &rt, Complex64::new(1.0, 0.0));
        let ratio = ac.norm_sqr() / a.norm_sqr();
        assert!((ratio - (rt.kappa / coupled.kappa_prime).powi(2)).abs() < 1e-12);
        assert!((ratio - 0.0207).abs() < 5e-4);
    }

    #[test]
    fn reflected_amplitude_matches_reflectivity() {
        let s = reference_system();
        for d in [-20.0, -3.0, 0.0, 5.0, 40.0] {
            let resp = effective_response(&s, mhz(d), mhz(0.7 * d));
            let ar = reflected_amplitude(&resp, &s.rates, Complex64::new(1.0, 0.0));
            assert!((ar.norm_sqr() - reflectivity(&s.rates, &resp)).abs() < 1e-12);
        }
    }

    #[test]
    fn cooperativity_identity() {
        let s = reference_system();
        let c = cooperativity(&s);
        let r = effective_response(&s, 0.0, 0.0);
        assert!((r.kappa_prime - s.rates.kappa * (1.0 + 2.0 * c)).abs() / r.kappa_prime < 1e-14);
        let empty = s.with_n(0.0);
        assert_eq!(cooperativity(&empty), 0.0);
        // C = 1 at g_N = √(2κγ′)
        let edge = CoupledSystem::from_collective((2.0 * s.rates.kappa * s.gamma_eff).sqrt(), s.gamma_eff, s.rates)
            .unwrap();
        assert!((cooperativity(&edge) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rabi_spectrum_checks_grid() {
        let s = reference_system();
        assert!(rabi_spectrum(&s, &[]).is_err());
        assert!(rabi_spectrum(&s, &[1.0, 0.0]).is_err());
    }
}
