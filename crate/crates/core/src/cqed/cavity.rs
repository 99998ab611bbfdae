use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{require_positive, Error, Result};
use crate::units::{EPSILON_0, HBAR, SPEED_OF_LIGHT};

/// Geometry and mirror coatings of a single-ended linear cavity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CavityParams {
    /// Mirror separation (m).
    pub length: f64,
    /// Intensity transmission of the input (partially transmitting) mirror.
    pub t1: f64,
    /// Intensity transmission of the high reflector.
    pub t2: f64,
    /// Round-trip intensity loss.
    pub losses: f64,
    /// TEM00 waist (m).
    pub waist: f64,
    /// Probe wavelength (m).
    pub wavelength: f64,
}

impl CavityParams {
    /// The 11.8 mm near-confocal cavity with 1500/5 ppm mirrors and
    /// ≈650 ppm absorption losses, probed at 866 nm.
    pub fn reference() -> Self {
        CavityParams {
            length: 11.8e-3,
            t1: 1500e-6,
            t2: 5e-6,
            losses: 650e-6,
            waist: 37e-6,
            wavelength: 866e-9,
        }
    }

    pub fn validate(&self) -> Result<()> {
        require_positive("cavity length", self.length)?;
        require_positive("waist", self.waist)?;
        require_positive("wavelength", self.wavelength)?;
        if !(self.t1 > 0.0 && self.t1 < 1.0) {
            return Err(Error::domain(format!("t1 must lie in (0, 1), got {}", self.t1)));
        }
        for (name, v) in [("t2", self.t2), ("losses", self.losses)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::domain(format!("{name} must lie in [0, 1), got {v}")));
            }
        }
        if self.t1 <= self.t2 {
            return Err(Error::domain(format!(
                "single-ended cavity requires t1 > t2 (got t1={}, t2={})",
                self.t1, self.t2
            )));
        }
        Ok(())
    }

    /// Derives round-trip time, decay rates, FSR, finesse and Rayleigh range.
    pub fn rates(&self) -> Result<CavityRates> {
        derive_cavity_rates(self)
    }

    /// Fundamental-mode volume of the standing-wave cavity, π w0² l / 4.
    pub fn mode_volume(&self) -> f64 {
        PI * self.waist * self.waist * self.length / 4.0
    }
}

/// Rates derived from [`CavityParams`]; all decay rates are field decay rates in rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CavityRates {
    /// Round-trip time 2l/c (s).
    pub tau: f64,
    pub kappa1: f64,
    pub kappa2: f64,
    pub kappa_loss: f64,
    /// Total field decay rate κ = κ1 + κ2 + κ_L.
    pub kappa: f64,
    /// Free spectral range (Hz).
    pub fsr: f64,
    pub finesse: f64,
    /// Rayleigh range (m).
    pub rayleigh_z0: f64,
}

impl CavityRates {
    /// Rates from explicit decay constants, for fits and synthetic systems
    /// where the mirror data are not the starting point.
    pub fn from_decay(kappa1: f64, kappa: f64, tau: f64) -> Result<Self> {
        require_positive("kappa1", kappa1)?;
        require_positive("round-trip time", tau)?;
        if kappa < kappa1 {
            return Err(Error::domain(format!("kappa ({kappa:e}) must be >= kappa1 ({kappa1:e})")));
        }
        let fsr = 1.0 / tau;
        Ok(CavityRates {
            tau,
            kappa1,
            kappa2: 0.0,
            kappa_loss: kappa - kappa1,
            kappa,
            fsr,
            finesse: PI * fsr / kappa,
            rayleigh_z0: f64::NAN,
        })
    }
}

pub fn derive_cavity_rates(p: &CavityParams) -> Result<CavityRates> {
    p.validate()?;
    let tau = 2.0 * p.length / SPEED_OF_LIGHT;
    let kappa1 = p.t1 / (2.0 * tau);
    let kappa2 = p.t2 / (2.0 * tau);
    let kappa_loss = p.losses / (2.0 * tau);
    let kappa = kappa1 + kappa2 + kappa_loss;
    let fsr = SPEED_OF_LIGHT / (2.0 * p.length);
    // FWHM in Hz is 2κ/2π = κ/π
    let finesse = fsr / (kappa / PI);
    Ok(CavityRates {
        tau,
        kappa1,
        kappa2,
        kappa_loss,
        kappa,
        fsr,
        finesse,
        rayleigh_z0: PI * p.waist * p.waist / p.wavelength,
    })
}

/// Optical dipole transition addressed by the probe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionParams {
    /// Dipole decay rate γ (rad/s).
    pub gamma: f64,
    pub wavelength: f64,
    /// Transition dipole element μ_ge (C·m), needed only for ab-initio `g`.
    pub dipole_moment: Option<f64>,
}

/// Dipole element of the 3d²D3/2(m=+3/2) ↔ 4p²P1/2(m=+1/2) line of ⁴⁰Ca⁺
/// that gives g = 2π × 0.53 MHz in the reference cavity.
pub const CA40_D32_P12_DIPOLE: f64 = 1.099_08e-29;

impl TransitionParams {
    /// ⁴⁰Ca⁺ 866 nm repumper line with γ = 2π × 11.2 MHz.
    pub fn ca40_866() -> Self {
        TransitionParams {
            gamma: crate::units::mhz(11.2),
            wavelength: 866e-9,
            dipole_moment: Some(CA40_D32_P12_DIPOLE),
        }
    }

    pub fn atomic_frequency(&self) -> f64 {
        2.0 * PI * SPEED_OF_LIGHT / self.wavelength
    }

    pub fn wavenumber(&self) -> f64 {
        2.0 * PI / self.wavelength
    }
}

/// Peak vacuum electric field E0 = √(ħω / 2ε0V) of the fundamental mode (V/m).
pub fn vacuum_field(t: &TransitionParams, p: &CavityParams) -> Result<f64> {
    p.validate()?;
    require_positive("wavelength", t.wavelength)?;
    Ok((HBAR * t.atomic_frequency() / (2.0 * EPSILON_0 * p.mode_volume())).sqrt())
}

/// Single-ion coupling at an antinode on the mode axis, g = μ_ge E0 / ħ.
pub fn single_ion_coupling(t: &TransitionParams, p: &CavityParams) -> Result<f64> {
    let mu = t
        .dipole_moment
        .ok_or_else(|| Error::Unsupported("single-ion coupling needs a dipole moment".into()))?;
    require_positive("dipole moment", mu)?;
    Ok(mu * vacuum_field(t, p)? / HBAR)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::{mhz, to_mhz};

    #[test]
    fn reference_cavity_rates() {
        let r = CavityParams::reference().rates().unwrap();
        assert!((r.fsr / 1e9 - 12.70).abs() < 0.01, "fsr {}", r.fsr);
        // (1500+5+650) ppm / 2τ, τ = 2 × 11.8 mm / c
        assert!((to_mhz(r.kappa) - 2.1784).abs() < 1e-3);
        assert!((r.finesse - 2915.6).abs() < 1.0);
        assert!((r.kappa - (r.kappa1 + r.kappa2 + r.kappa_loss)).abs() < 1e-6);
        assert!((to_mhz(r.kappa1) - 1.5163).abs() < 1e-3);
    }

    #[test]
    fn single_channel_identity() {
        let p = CavityParams { t2: 0.0, losses: 0.0, ..CavityParams::reference() };
        let r = p.rates().unwrap();
        assert_eq!(r.kappa, r.kappa1);
    }

    #[test]
    fn rejects_bad_geometry() {
        let p = CavityParams { length: -1.0, ..CavityParams::reference() };
        assert!(matches!(p.rates(), Err(Error::Domain(_))));
        let p = CavityParams { t2: 0.01, t1: 0.001, ..CavityParams::reference() };
        assert!(p.rates().is_err());
        let p = CavityParams { losses: 1.5, ..CavityParams::reference() };
        assert!(p.rates().is_err());
    }

    #[test]
    fn vacuum_field_and_coupling() {
        let t = TransitionParams::ca40_866();
        let p = CavityParams::reference();
        let e0 = vacuum_field(&t, &p).unwrap();
        assert!((e0 - 31.95).abs() < 0.05, "E0 = {e0}");
        let g = single_ion_coupling(&t, &p).unwrap();
        assert!((g - mhz(0.53)).abs() / mhz(0.53) < 1e-3);
    }

    #[test]
    fn coupling_scales_with_inverse_root_volume() {
        let t = TransitionParams::ca40_866();
        let p = CavityParams::reference();
        let g1 = single_ion_coupling(&t, &p).unwrap();
        let bigger = CavityParams { waist: 2.0 * p.waist, ..p };
        let g2 = single_ion_coupling(&t, &bigger).unwrap();
        assert!((g2 / g1 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn missing_dipole_is_unsupported() {
        let t = TransitionParams { dipole_moment: None, ..TransitionParams::ca40_866() };
        assert!(matches!(
            single_ion_coupling(&t, &CavityParams::reference()),
            Err(Error::Unsupported(_))
        ));
    }
}
