//! Doppler averaging of the cavity response over a thermal velocity
//! distribution along the cavity axis.

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::cqed::{effective_response, CoupledResponse, CoupledSystem};
use crate::error::{require_nonnegative, require_positive, Error, Result};
use crate::estimate::{fit_nls, FitProblem};
use crate::quadrature::GaussHermite;
use crate::units::BOLTZMANN;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalConfig {
    pub temperature: f64,
    pub ion_mass: f64,
    /// Probe wavenumber k (rad/m).
    pub wavenumber: f64,
}

impl ThermalConfig {
    pub fn new(temperature: f64, ion_mass: f64, wavelength: f64) -> Result<Self> {
        require_positive("wavelength", wavelength)?;
        let t = ThermalConfig { temperature, ion_mass, wavenumber: 2.0 * PI / wavelength };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        require_nonnegative("temperature", self.temperature)?;
        require_positive("ion mass", self.ion_mass)?;
        require_positive("wavenumber", self.wavenumber)
    }

    /// v_D = √(k_B T / m).
    pub fn doppler_velocity(&self) -> f64 {
        (BOLTZMANN * self.temperature / self.ion_mass).sqrt()
    }

    /// k v_D (rad/s).
    pub fn doppler_rate(&self) -> f64 {
        self.wavenumber * self.doppler_velocity()
    }
}

/// Velocity kernel ξ(v), the mean of the two Lorentzians seen by the
/// counter-propagating components of the standing wave.
pub fn xi(v: f64, gamma: f64, delta: f64, k: f64) -> f64 {
    let kv2 = (k * v).powi(2);
    let s = gamma * gamma + delta * delta;
    (s + kv2) / (s * s + 2.0 * (gamma * gamma - delta * delta) * kv2 + kv2 * kv2)
}

/// Relative change between successive Gauss–Hermite rules that counts as converged.
pub const THERMAL_TOLERANCE: f64 = 1e-8;

/// Maxwell–Boltzmann averages ⟨γξ⟩ and ⟨(Δ − kv)ξ⟩ by Gauss–Hermite
/// quadrature, doubling the node count from 64 until converged.
pub fn thermal_averages(gamma: f64, delta: f64, th: &ThermalConfig) -> Result<(f64, f64)> {
    let vd = th.doppler_velocity();
    let k = th.wavenumber;
    let average = |rule: &GaussHermite| -> (f64, f64) {
        let mut absorption = 0.0;
        let mut dispersion = 0.0;
        for (&x, &w) in rule.nodes.iter().zip(&rule.weights) {
            let v = SQRT_2 * vd * x;
            let kernel = xi(v, gamma, delta, k);
            absorption += w * gamma * kernel;
            dispersion += w * (delta - k * v) * kernel;
        }
        let norm = 1.0 / PI.sqrt();
        (absorption * norm, dispersion * norm)
    };
    let mut prev = average(GaussHermite::cached(0));
    for level in 1..=GaussHermite::MAX_LEVEL {
        let next = average(GaussHermite::cached(level));
        let scale = next.0.abs().max(next.1.abs());
        let change = (next.0 - prev.0).abs().max((next.1 - prev.1).abs());
        if change <= THERMAL_TOLERANCE * scale {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::Numeric {
        routine: "thermal Gauss-Hermite average",
        diagnostics: format!(
            "no convergence with {} nodes: kv_D = {:e} rad/s, gamma = {gamma:e}, delta = {delta:e}",
            GaussHermite::cached(GaussHermite::MAX_LEVEL).len(),
            th.doppler_rate()
        ),
    })
}

/// κ′ = κ + g²N⟨γξ⟩ and Δc′ = Δc − g²N⟨(Δ − kv)ξ⟩, with `sys.gamma_eff`
/// taken as the homogeneous dipole decay rate γ.
pub fn thermal_response(sys: &CoupledSystem, delta: f64, delta_c: f64, th: &ThermalConfig) -> Result<CoupledResponse> {
    sys.validate()?;
    th.validate()?;
    if th.temperature == 0.0 {
        return Ok(effective_response(sys, delta, delta_c));
    }
    let (absorption, dispersion) = thermal_averages(sys.gamma_eff, delta, th)?;
    let g2n = sys.g_n_sq();
    Ok(CoupledResponse {
        kappa_prime: sys.rates.kappa + g2n * absorption,
        delta_c_prime: delta_c - g2n * dispersion,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EffectiveGamma {
    /// γ′ from a Lorentzian fit to the thermal κ′(Δ).
    pub fitted: f64,
    pub std_error: f64,
    /// γ + kv_D/√2.
    pub closed_form: f64,
}

/// Fits κ − κ′(Δ) = g²N γ′/(γ′² + Δ²) to the thermal absorption over
/// `fit_grid`, with g²N held at its true value.
pub fn effective_gamma(sys: &CoupledSystem, th: &ThermalConfig, fit_grid: &[f64]) -> Result<EffectiveGamma> {
    let gamma = sys.gamma_eff;
    let closed_form = gamma + th.doppler_rate() / SQRT_2;
    if th.temperature == 0.0 {
        return Ok(EffectiveGamma { fitted: gamma, std_error: 0.0, closed_form });
    }
    if sys.g_n_sq() == 0.0 {
        return Err(Error::DegenerateFit("effective gamma needs g_N > 0".into()));
    }
    // work in units of γ so the fit is well scaled
    let x: Vec<f64> = fit_grid.iter().map(|d| d / gamma).collect();
    let y = fit_grid
        .iter()
        .map(|&d| thermal_averages(gamma, d, th).map(|(a, _)| a * gamma))
        .collect::<Result<Vec<f64>>>()?;
    let model = |x: f64, p: &[f64]| p[0] / (p[0] * p[0] + x * x);
    let problem = FitProblem::new("effective gamma", model, x, y, vec![closed_form / gamma])
        .with_bounds(vec![(1e-6, 1e6)]);
    let r = fit_nls(&problem)?;
    if !r.converged {
        return Err(Error::Numeric {
            routine: "effective gamma fit",
            diagnostics: format!("no convergence after {} iterations", r.iterations),
        });
    }
    Ok(EffectiveGamma { fitted: r.params[0] * gamma, std_error: r.std_errors[0] * gamma, closed_form })
}

/// Default ratio by which the Doppler rate must undercut the slowest
/// collective rate for the velocity-class picture to hold.
pub const VALIDITY_FACTOR: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Validity {
    pub doppler_rate: f64,
    /// min[κ + g²N/γ, γ + g²N/κ].
    pub min_rate: f64,
    /// min_rate / kv_D; infinite at T = 0.
    pub margin: f64,
    pub factor: f64,
    pub valid: bool,
}

pub fn validity_check(sys: &CoupledSystem, th: &ThermalConfig) -> Validity {
    validity_check_with(sys, th, VALIDITY_FACTOR)
}

pub fn validity_check_with(sys: &CoupledSystem, th: &ThermalConfig, factor: f64) -> Validity {
    let kvd = th.doppler_rate();
    let (k, g) = (sys.rates.kappa, sys.gamma_eff);
    let g2n = sys.g_n_sq();
    let min_rate = (k + g2n / g).min(g + g2n / k);
    let margin = if kvd == 0.0 { f64::INFINITY } else { min_rate / kvd };
    Validity { doppler_rate: kvd, min_rate, margin, factor, valid: margin >= factor }
}
