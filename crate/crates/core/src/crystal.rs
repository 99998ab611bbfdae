//! Spheroidal ion Coulomb crystals and their overlap with the TEM00 mode.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{require_nonnegative, require_positive, Error, Result};
use crate::quadrature::integrate;
use crate::units::EPSILON_0;

/// Linear RF trap parameters that set the crystal density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrapParams {
    /// Trap center to electrode distance (m).
    pub r0: f64,
    /// RF drive angular frequency (rad/s).
    pub omega_rf: f64,
    /// RF amplitude (V).
    pub u_rf: f64,
    pub ion_mass: f64,
    /// Calibrated ρ/U² (m⁻³·V⁻²). When absent the density is computed
    /// from the trap geometry.
    pub density_coefficient: Option<f64>,
}

impl TrapParams {
    /// Calibrated coefficient 6.01 × 10³ V⁻²cm⁻³ of the reference trap, in m⁻³V⁻².
    pub const REFERENCE_COEFFICIENT: f64 = 6.01e3 * 1e6;

    /// Density per squared RF volt from first principles, ε0 / (M r0⁴ Ω²).
    pub fn first_principles_coefficient(&self) -> f64 {
        EPSILON_0 / (self.ion_mass * self.r0.powi(4) * self.omega_rf * self.omega_rf)
    }
}

pub fn ion_density(t: &TrapParams) -> Result<f64> {
    require_nonnegative("RF amplitude", t.u_rf)?;
    let coefficient = match t.density_coefficient {
        Some(c) => {
            require_positive("density coefficient", c)?;
            c
        }
        None => {
            require_positive("r0", t.r0)?;
            require_positive("RF frequency", t.omega_rf)?;
            require_positive("ion mass", t.ion_mass)?;
            t.first_principles_coefficient()
        }
    };
    Ok(coefficient * t.u_rf * t.u_rf)
}

/// Spheroidal crystal of uniform density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrystalSpec {
    /// Half-length along the cavity axis (m).
    pub half_length: f64,
    pub radius: f64,
    /// Ion density (m⁻³).
    pub density: f64,
    /// Fraction of ions prepared in the probed substate.
    pub pump_efficiency: f64,
    /// Radial offsets of the crystal axis from the cavity axis (m).
    pub offset_x: f64,
    pub offset_y: f64,
}

impl CrystalSpec {
    /// The ≈520-ion crystal used for the absorption, dispersion and
    /// vacuum Rabi splitting measurements.
    pub fn reference() -> Self {
        CrystalSpec {
            half_length: 511e-6,
            radius: 75e-6,
            density: 5.4e14,
            pump_efficiency: 0.97,
            offset_x: 3.9e-6,
            offset_y: 15.7e-6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        require_positive("crystal half-length", self.half_length)?;
        require_positive("crystal radius", self.radius)?;
        require_nonnegative("ion density", self.density)?;
        if !(self.pump_efficiency > 0.0 && self.pump_efficiency <= 1.0) {
            return Err(Error::domain(format!(
                "pump efficiency must lie in (0, 1], got {}",
                self.pump_efficiency
            )));
        }
        if !(self.offset_x.is_finite() && self.offset_y.is_finite()) {
            return Err(Error::domain("crystal offsets must be finite"));
        }
        Ok(())
    }

    pub fn volume(&self) -> f64 {
        4.0 / 3.0 * PI * self.radius * self.radius * self.half_length
    }
}

/// Gaussian TEM00 mode geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeGeometry {
    pub waist: f64,
    pub wavelength: f64,
    pub rayleigh_z0: f64,
}

impl ModeGeometry {
    pub fn new(waist: f64, wavelength: f64) -> Result<Self> {
        require_positive("waist", waist)?;
        require_positive("wavelength", wavelength)?;
        Ok(ModeGeometry {
            waist,
            wavelength,
            rayleigh_z0: PI * waist * waist / wavelength,
        })
    }

    pub fn reference() -> Self {
        ModeGeometry::new(37e-6, 866e-9).expect("reference mode is valid")
    }

    pub fn waist_at(&self, z: f64) -> f64 {
        self.waist * (1.0 + (z / self.rayleigh_z0).powi(2)).sqrt()
    }

    pub fn wavenumber(&self) -> f64 {
        2.0 * PI / self.wavelength
    }
}

/// Squared mode function Ψ00²(r), or its average over the standing wave
/// ½ (w0/w(z))² exp(−2r²/w(z)²) when `axially_averaged` is set.
pub fn mode_weight(mode: &ModeGeometry, x: f64, y: f64, z: f64, axially_averaged: bool) -> f64 {
    let w = mode.waist_at(z);
    let r2 = x * x + y * y;
    let transverse = (mode.waist / w).powi(2) * (-2.0 * r2 / (w * w)).exp();
    if axially_averaged {
        return 0.5 * transverse;
    }
    let k = mode.wavenumber();
    let z0 = mode.rayleigh_z0;
    // k r² / 2R(z) with R(z) = z + z0²/z, written to stay finite at z = 0
    let curvature = k * r2 * z / (2.0 * (z * z + z0 * z0));
    let phase = k * z - (z / z0).atan() + curvature;
    transverse * phase.sin().powi(2)
}

const QUAD_REL_TOL: f64 = 1e-9;
/// Required relative accuracy of the effective ion number.
pub const EFFECTIVE_COUNT_TOLERANCE: f64 = 1e-4;

/// Effective number of ions N = η ρ ∫_V ½ (w0/w)² exp(−2[(x−x0)²+(y−y0)²]/w²) dV
/// over the spheroid x² + y² ≤ R²(1 − z²/L²).
///
/// The y integral is done in closed form with erf; x and z use nested
/// adaptive Gauss–Kronrod quadrature.
pub fn effective_ion_count(c: &CrystalSpec, m: &ModeGeometry) -> Result<f64> {
    c.validate()?;
    if c.density == 0.0 {
        return Ok(0.0);
    }
    let (l, r) = (c.half_length, c.radius);
    let gaussian_area = PI * m.waist * m.waist / 2.0;
    let mut inner_failure: Option<Error> = None;

    let slice = |z: f64, failure: &mut Option<Error>| -> f64 {
        let rz = r * (1.0 - (z / l).powi(2)).max(0.0).sqrt();
        if rz == 0.0 {
            return 0.0;
        }
        let w = m.waist_at(z);
        let s = std::f64::consts::SQRT_2 / w;
        let row = |x: f64| -> f64 {
            let h = (rz * rz - x * x).max(0.0).sqrt();
            let gx = (-2.0 * (x - c.offset_x).powi(2) / (w * w)).exp();
            let span = libm::erf(s * (h - c.offset_y)) - libm::erf(s * (-h - c.offset_y));
            gx * w * (PI / 8.0).sqrt() * span
        };
        match integrate(row, -rz, rz, 1e-13 * gaussian_area, QUAD_REL_TOL, 2000) {
            Ok(v) => (m.waist / w).powi(2) * v.value,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        }
    };

    let outer = integrate(
        |z| slice(z, &mut inner_failure),
        -l,
        l,
        1e-13 * gaussian_area * l,
        QUAD_REL_TOL,
        2000,
    );
    if let Some(e) = inner_failure {
        return Err(e);
    }
    let outer = outer?;
    if outer.error_estimate > EFFECTIVE_COUNT_TOLERANCE * outer.value.abs() {
        return Err(Error::Numeric {
            routine: "effective ion count",
            diagnostics: format!(
                "integral {:e} with error estimate {:e} after {} evaluations",
                outer.value, outer.error_estimate, outer.evaluations
            ),
        });
    }
    Ok(c.pump_efficiency * c.density * 0.5 * outer.value)
}

/// Thin-crystal estimate N ≈ ρ π w0² L / 4 for R ≫ w0 and L ≪ z0.
pub fn effective_ion_count_thin(density: f64, half_length: f64, waist: f64) -> f64 {
    density * PI * waist * waist * half_length / 4.0
}

/// Total ions in the spheroid, ρ · (4/3) π R² L.
pub fn total_ion_count(c: &CrystalSpec) -> f64 {
    c.density * c.volume()
}

/// Relative uncertainty δN/N = √((δρ/ρ)² + (δV/V)² + (δη/η)²) with
/// δV/V = δx √(16L² + R²) / (2RL).
pub fn count_uncertainty(rel_drho: f64, imaging_dx: f64, c: &CrystalSpec, rel_deta: f64) -> Result<f64> {
    require_nonnegative("relative density uncertainty", rel_drho)?;
    require_nonnegative("imaging resolution", imaging_dx)?;
    require_nonnegative("relative pumping uncertainty", rel_deta)?;
    require_positive("crystal half-length", c.half_length)?;
    require_positive("crystal radius", c.radius)?;
    let (l, r) = (c.half_length, c.radius);
    let rel_dv = imaging_dx * (16.0 * l * l + r * r).sqrt() / (2.0 * r * l);
    Ok((rel_drho.powi(2) + rel_dv.powi(2) + rel_deta.powi(2)).sqrt())
}
