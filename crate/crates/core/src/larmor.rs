//! Larmor precession in the spin-3/2 D manifold and its imprint on the
//! two-transition cavity response.
//!
//! Basis order is m_J = −3/2, −1/2, +1/2, +3/2.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Matrix4, SymmetricEigen, Vector4};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{require_nonnegative, require_positive, Error, Result};
use crate::units::{BOHR_MAGNETON, HBAR};

pub const M_VALUES: [f64; 4] = [-1.5, -0.5, 0.5, 1.5];

/// Landé factor of the 3d²D3/2 level.
pub const D32_LANDE_G: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinState {
    pub amplitudes: [Complex64; 4],
}

impl SpinState {
    pub const NORM_TOLERANCE: f64 = 1e-12;

    /// Normalizes `amplitudes`; fails for the zero vector.
    pub fn new(amplitudes: [Complex64; 4]) -> Result<Self> {
        let n: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::domain("spin state must have non-zero finite norm"));
        }
        Ok(SpinState { amplitudes: amplitudes.map(|a| a / n) })
    }

    /// Basis state |m⟩ for m ∈ {−3/2, −1/2, 1/2, 3/2}.
    pub fn basis(m: f64) -> Result<Self> {
        let idx = index_of(m)?;
        let mut a = [Complex64::new(0.0, 0.0); 4];
        a[idx] = Complex64::new(1.0, 0.0);
        Ok(SpinState { amplitudes: a })
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm_sqr() - 1.0).abs() <= Self::NORM_TOLERANCE
    }
}

pub fn index_of(m: f64) -> Result<usize> {
    M_VALUES
        .iter()
        .position(|&v| v == m)
        .ok_or_else(|| Error::domain(format!("m_J must be one of ±1/2, ±3/2, got {m}")))
}

/// Incoherent mixture of pure states with non-negative weights.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinMixture {
    pub components: Vec<(f64, SpinState)>,
}

impl SpinMixture {
    pub fn new(components: Vec<(f64, SpinState)>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::domain("mixture needs at least one component"));
        }
        for (w, _) in &components {
            require_nonnegative("mixture weight", *w)?;
        }
        let total: f64 = components.iter().map(|c| c.0).sum();
        require_positive("total mixture weight", total)?;
        Ok(SpinMixture {
            components: components.into_iter().map(|(w, s)| (w / total, s)).collect(),
        })
    }

    pub fn pure(s: SpinState) -> Self {
        SpinMixture { components: vec![(1.0, s)] }
    }

    /// Equal-weight incoherent mixture of m = −3/2 and m = +3/2.
    pub fn stretched_pair() -> Self {
        SpinMixture {
            components: vec![
                (0.5, SpinState::basis(-1.5).expect("valid m")),
                (0.5, SpinState::basis(1.5).expect("valid m")),
            ],
        }
    }

    pub fn populations(&self) -> [f64; 4] {
        let mut p = [0.0; 4];
        for (w, s) in &self.components {
            for (pi, qi) in p.iter_mut().zip(populations(s)) {
                *pi += w * qi;
            }
        }
        p
    }
}

/// Static field as Larmor rates (rad/s) along z and x.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldConfig {
    pub omega_x: f64,
    pub omega_z: f64,
}

impl FieldConfig {
    pub fn from_rates(omega_x: f64, omega_z: f64) -> Self {
        FieldConfig { omega_x, omega_z }
    }

    /// Field components in tesla converted with ω = γ_GM B.
    pub fn from_field(b_x: f64, b_z: f64, g_factor: f64) -> Self {
        let gm = gyromagnetic_ratio(g_factor);
        FieldConfig { omega_x: gm * b_x, omega_z: gm * b_z }
    }
}

/// γ_GM = μ_B 𝔤 / ħ in rad/s/T.
pub fn gyromagnetic_ratio(g_factor: f64) -> f64 {
    BOHR_MAGNETON * g_factor / HBAR
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DecayKind {
    Exponential,
    Gaussian,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayModel {
    pub kind: DecayKind,
    /// τ_e or τ_g (s); ignored for [`DecayKind::None`].
    pub timescale: f64,
}

impl DecayModel {
    pub fn none() -> Self {
        DecayModel { kind: DecayKind::None, timescale: f64::INFINITY }
    }

    pub fn exponential(tau_e: f64) -> Self {
        DecayModel { kind: DecayKind::Exponential, timescale: tau_e }
    }

    pub fn gaussian(tau_g: f64) -> Self {
        DecayModel { kind: DecayKind::Gaussian, timescale: tau_g }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind != DecayKind::None && !(self.timescale > 0.0) {
            return Err(Error::domain(format!("decay timescale must be positive, got {}", self.timescale)));
        }
        Ok(())
    }

    pub fn envelope(&self, tau: f64) -> f64 {
        match self.kind {
            DecayKind::None => 1.0,
            DecayKind::Exponential => (-tau / self.timescale).exp(),
            DecayKind::Gaussian => (-(tau / self.timescale).powi(2)).exp(),
        }
    }
}

/// Couplings, detunings and ion numbers of the m = +1/2 and m = +3/2 probe transitions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoTransitionConfig {
    pub g_half: f64,
    pub g_threehalf: f64,
    pub delta_half: f64,
    pub delta_threehalf: f64,
    pub n_half: f64,
    pub n_threehalf: f64,
}

impl TwoTransitionConfig {
    pub fn validate(&self) -> Result<()> {
        require_nonnegative("g_1/2", self.g_half)?;
        require_nonnegative("g_3/2", self.g_threehalf)?;
        require_nonnegative("N_1/2", self.n_half)?;
        require_nonnegative("N_3/2", self.n_threehalf)?;
        if !(self.delta_half.is_finite() && self.delta_threehalf.is_finite()) {
            return Err(Error::domain("transition detunings must be finite"));
        }
        Ok(())
    }

    /// Same couplings with N_m = N · P_m for the two addressed substates.
    pub fn with_populations(&self, n_total: f64, pops: &[f64; 4]) -> Self {
        TwoTransitionConfig {
            n_half: n_total * pops[2],
            n_threehalf: n_total * pops[3],
            ..*self
        }
    }
}

/// H/ħ = ω_z J_z + ω_x J_x for spin 3/2 (rad/s). Real symmetric.
pub fn hamiltonian(f: &FieldConfig) -> Matrix4<f64> {
    let mut h = Matrix4::zeros();
    for (i, &m) in M_VALUES.iter().enumerate() {
        h[(i, i)] = f.omega_z * m;
        if i + 1 < 4 {
            // ⟨m+1|J_x|m⟩ = ½ √(j(j+1) − m(m+1))
            let c = 0.5 * f.omega_x * (3.75 - m * (m + 1.0)).sqrt();
            h[(i, i + 1)] = c;
            h[(i + 1, i)] = c;
        }
    }
    h
}

/// Unitary propagator exp(−iHτ) from the eigendecomposition of H.
pub fn propagator(f: &FieldConfig, tau: f64) -> nalgebra::Matrix4<Complex64> {
    let eig = SymmetricEigen::new(hamiltonian(f));
    let v = eig.eigenvectors.map(|x| Complex64::new(x, 0.0));
    let phases = nalgebra::Matrix4::from_diagonal(&Vector4::from_iterator(
        eig.eigenvalues.iter().map(|&e| Complex64::from_polar(1.0, -e * tau)),
    ));
    v * phases * v.adjoint()
}

pub fn evolve(s: &SpinState, f: &FieldConfig, tau: f64) -> SpinState {
    let psi = Vector4::from_column_slice(&s.amplitudes);
    let out = propagator(f, tau) * psi;
    let n = out.norm();
    SpinState { amplitudes: [out[0] / n, out[1] / n, out[2] / n, out[3] / n] }
}

pub fn populations(s: &SpinState) -> [f64; 4] {
    s.amplitudes.map(|a| a.norm_sqr())
}

/// ω_L = √(ω_z² + ω_x²).
pub fn larmor_frequency(f: &FieldConfig) -> f64 {
    f.omega_z.hypot(f.omega_x)
}

/// κ′ = κ + Σ_m g_m² N_m γ/(γ² + Δ_m²) over the two addressed transitions.
pub fn kappa_prime_two_transition(cfg: &TwoTransitionConfig, gamma: f64, kappa: f64) -> f64 {
    let term = |g: f64, n: f64, d: f64| g * g * n * gamma / (gamma * gamma + d * d);
    kappa + term(cfg.g_half, cfg.n_half, cfg.delta_half) + term(cfg.g_threehalf, cfg.n_threehalf, cfg.delta_threehalf)
}

/// C(τ) = [a cos(ω_L τ) + b cos(2ω_L τ)] env(τ) + c.
pub fn cooperativity_trace(a: f64, b: f64, c: f64, omega_l: f64, decay: &DecayModel, taus: &[f64]) -> Vec<f64> {
    taus.iter()
        .map(|&t| (a * (omega_l * t).cos() + b * (2.0 * omega_l * t).cos()) * decay.envelope(t) + c)
        .collect()
}

/// Harmonic decomposition P(τ) = c + Σ_k [a_k cos(kω_Lτ) + s_k sin(kω_Lτ)], k = 1..3.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HarmonicFit {
    /// Coefficient of cos(ω_L τ).
    pub a: f64,
    /// Coefficient of cos(2ω_L τ).
    pub b: f64,
    pub c: f64,
    /// Fitted angular frequency, or `None` when the trace does not oscillate.
    pub omega_l: Option<f64>,
    /// Amplitude carried by sin terms and the 3ω_L harmonic.
    pub other_harmonics: f64,
    pub rms_residual: f64,
}

/// Populations along a τ grid with per-substate harmonic fits.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PopulationTrace {
    pub taus: Vec<f64>,
    /// `populations[i][m]` at `taus[i]`.
    pub populations: Vec<[f64; 4]>,
    pub fits: [HarmonicFit; 4],
}

/// Largest RMS residual tolerated for the harmonic model of an exact trace.
pub const HARMONIC_TOLERANCE: f64 = 1e-9;

pub fn populations_trace(initial: &SpinState, f: &FieldConfig, taus: &[f64]) -> Result<PopulationTrace> {
    mixture_populations_trace(&SpinMixture::pure(*initial), f, taus)
}

/// Population trace of an incoherent mixture, with every substate fitted to
/// the harmonic model at multiples of ω_L.
pub fn mixture_populations_trace(initial: &SpinMixture, f: &FieldConfig, taus: &[f64]) -> Result<PopulationTrace> {
    for (_, s) in &initial.components {
        if !s.is_normalized() {
            return Err(Error::domain("initial spin state is not normalized"));
        }
    }
    if taus.windows(2).any(|w| w[1] <= w[0]) || taus.iter().any(|&t| !(t >= 0.0)) {
        return Err(Error::domain("tau grid must be non-negative and strictly increasing"));
    }
    let pops: Vec<[f64; 4]> = taus
        .iter()
        .map(|&t| {
            let mut p = [0.0; 4];
            for (w, s) in &initial.components {
                for (pm, q) in p.iter_mut().zip(populations(&evolve(s, f, t))) {
                    *pm += w * q;
                }
            }
            p
        })
        .collect();
    let omega_l = larmor_frequency(f);
    let mut fits = Vec::with_capacity(4);
    for m in 0..4 {
        let y: Vec<f64> = pops.iter().map(|p| p[m]).collect();
        let fit = fit_harmonics(taus, &y, omega_l)?;
        if fit.rms_residual > HARMONIC_TOLERANCE {
            return Err(Error::ModelViolation(format!(
                "population of m = {} deviates from the harmonic model by {:.2e} rms",
                M_VALUES[m], fit.rms_residual
            )));
        }
        fits.push(fit);
    }
    Ok(PopulationTrace {
        taus: taus.to_vec(),
        populations: pops,
        fits: fits.try_into().expect("four substates"),
    })
}

fn harmonic_design(taus: &[f64], omega: f64) -> DMatrix<f64> {
    DMatrix::from_fn(taus.len(), 7, |i, j| {
        let t = taus[i];
        match j {
            0 => 1.0,
            _ => {
                let k = ((j + 1) / 2) as f64;
                if j % 2 == 1 {
                    (k * omega * t).cos()
                } else {
                    (k * omega * t).sin()
                }
            }
        }
    })
}

fn linear_harmonics(taus: &[f64], y: &[f64], omega: f64) -> (DVector<f64>, f64) {
    let a = harmonic_design(taus, omega);
    let b = DVector::from_column_slice(y);
    let svd = a.clone().svd(true, true);
    let coef = svd.solve(&b, 1e-12).expect("SVD solve with both factors");
    let r = &a * &coef - b;
    (coef, (r.norm_squared() / taus.len() as f64).sqrt())
}

/// Fits the harmonic model with ω refined by golden-section search on the
/// variable-projection residual around `omega_guess`.
pub fn fit_harmonics(taus: &[f64], y: &[f64], omega_guess: f64) -> Result<HarmonicFit> {
    if taus.len() < 7 {
        return Err(Error::DegenerateFit(format!("{} samples for a 7-term harmonic model", taus.len())));
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let spread = y.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max);
    if omega_guess == 0.0 || spread <= 1e-13 {
        let rms = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / y.len() as f64).sqrt();
        return Ok(HarmonicFit { a: 0.0, b: 0.0, c: mean, omega_l: None, other_harmonics: 0.0, rms_residual: rms });
    }
    let cost = |w: f64| linear_harmonics(taus, y, w).1;
    let (mut lo, mut hi) = (omega_guess * (1.0 - 1e-3), omega_guess * (1.0 + 1e-3));
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let (mut f1, mut f2) = (cost(x1), cost(x2));
    while hi - lo > 1e-13 * omega_guess {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = cost(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = cost(x2);
        }
    }
    let mut omega = 0.5 * (lo + hi);
    // the search can only move away from the guess if that lowers the residual
    if cost(omega_guess) <= cost(omega) {
        omega = omega_guess;
    }
    let (coef, rms) = linear_harmonics(taus, y, omega);
    let other = coef[2].hypot(coef[4]).hypot(coef[5]).hypot(coef[6]);
    Ok(HarmonicFit { a: coef[1], b: coef[3], c: coef[0], omega_l: Some(omega), other_harmonics: other, rms_residual: rms })
}

/// Time average of the populations over one Larmor period, exact from the
/// eigendecomposition (only degenerate eigenpairs survive).
pub fn mean_populations(initial: &SpinMixture, f: &FieldConfig) -> [f64; 4] {
    if larmor_frequency(f) == 0.0 {
        return initial.populations();
    }
    let eig = SymmetricEigen::new(hamiltonian(f));
    let v = eig.eigenvectors;
    let mut p = [0.0; 4];
    for (w, s) in &initial.components {
        let psi = Vector4::from_column_slice(&s.amplitudes);
        for j in 0..4 {
            let vj = v.column(j).map(|x| Complex64::new(x, 0.0));
            let cj = vj.dotc(&psi).norm_sqr();
            for (m, pm) in p.iter_mut().enumerate() {
                *pm += w * cj * v[(m, j)] * v[(m, j)];
            }
        }
    }
    p
}

/// Period 2π/ω_L of the population oscillation fundamental (s).
pub fn larmor_period(f: &FieldConfig) -> f64 {
    2.0 * PI / larmor_frequency(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::khz;

    #[test]
    fn hamiltonian_structure() {
        let h = hamiltonian(&FieldConfig::from_rates(0.0, 2.0));
        assert_eq!(h, Matrix4::from_diagonal(&Vector4::new(-3.0, -1.0, 1.0, 3.0)));
        let h = hamiltonian(&FieldConfig::from_rates(2.0, 1.3));
        assert!((h[(2, 3)] - 3f64.sqrt()).abs() < 1e-15);
        assert!((h[(1, 2)] - 2.0).abs() < 1e-15);
        assert!(h.trace().abs() < 1e-15);
    }

    #[test]
    fn pi_rotation_flips_stretched_state() {
        let f = FieldConfig::from_rates(khz(100.0), 0.0);
        let tau = PI / f.omega_x;
        let p = populations(&evolve(&SpinState::basis(1.5).unwrap(), &f, tau));
        assert!((p[0] - 1.0).abs() < 1e-12);
        let same = evolve(&SpinState::basis(1.5).unwrap(), &f, 0.0);
        assert!((populations(&same)[3] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn calibration_field_frequency() {
        let f = FieldConfig::from_field(0.0, 0.134e-4, D32_LANDE_G);
        assert!((f.omega_z / khz(150.0) - 1.0).abs() < 0.01);
        let f = FieldConfig::from_field(0.15e-4, 0.15e-4, D32_LANDE_G);
        assert!((larmor_frequency(&f) / khz(237.5) - 1.0).abs() < 0.01);
    }

    #[test]
    fn two_transition_reductions() {
        let cfg = TwoTransitionConfig {
            g_half: 1.0,
            g_threehalf: 1.0,
            delta_half: 0.3,
            delta_threehalf: 0.3,
            n_half: 50.0,
            n_threehalf: 50.0,
        };
        let split = kappa_prime_two_transition(&cfg, 2.0, 0.5);
        let single = kappa_prime_two_transition(&TwoTransitionConfig { n_half: 0.0, n_threehalf: 100.0, ..cfg }, 2.0, 0.5);
        assert!((split - single).abs() < 1e-12);
        let empty = TwoTransitionConfig { n_half: 0.0, n_threehalf: 0.0, ..cfg };
        assert_eq!(kappa_prime_two_transition(&empty, 2.0, 0.5), 0.5);
    }

    #[test]
    fn cooperativity_trace_spot_values() {
        let d = DecayModel::exponential(1.7e-3);
        let w = khz(237.0);
        let taus: Vec<f64> = (0..60).map(|i| i as f64 * 2e-6).collect();
        let c = cooperativity_trace(0.3, 0.1, 1.0, w, &d, &taus);
        for i in [0, 7, 19, 33, 59] {
            let t = taus[i];
            let e = (-t / 1.7e-3).exp();
            let hand = 0.3 * (w * t).cos() * e + 0.1 * (2.0 * w * t).cos() * e + 1.0;
            assert!((c[i] - hand).abs() < 1e-14);
        }
        assert!((c[0] - 1.4).abs() < 1e-15);
    }

    #[test]
    fn stretched_pair_has_two_harmonics() {
        let f = FieldConfig::from_rates(khz(150.0), khz(150.0));
        let taus: Vec<f64> = (0..200).map(|i| i as f64 * 0.25e-6).collect();
        let tr = mixture_populations_trace(&SpinMixture::stretched_pair(), &f, &taus).unwrap();
        let wl = larmor_frequency(&f);
        for fit in &tr.fits {
            assert!(fit.other_harmonics < 1e-10);
            assert!((fit.omega_l.unwrap() / wl - 1.0).abs() < 1e-6);
        }
        assert!((wl / (2f64.sqrt() * khz(150.0)) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn longitudinal_field_freezes_populations() {
        let f = FieldConfig::from_rates(0.0, khz(150.0));
        let taus: Vec<f64> = (0..50).map(|i| i as f64 * 1e-6).collect();
        let s = SpinState::new([Complex64::new(0.5, 0.0); 4]).unwrap();
        let tr = populations_trace(&s, &f, &taus).unwrap();
        for fit in &tr.fits {
            assert!(fit.a.abs() < 1e-12 && fit.b.abs() < 1e-12);
            assert!((fit.c - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn time_average_matches_long_trace() {
        let f = FieldConfig::from_rates(khz(100.0), khz(150.0));
        let mix = SpinMixture::stretched_pair();
        let mean = mean_populations(&mix, &f);
        let period = larmor_period(&f);
        let n = 400;
        let mut acc = [0.0; 4];
        for i in 0..n {
            let t = period * i as f64 / n as f64;
            for (w, s) in &mix.components {
                for (a, p) in acc.iter_mut().zip(populations(&evolve(s, &f, t))) {
                    *a += w * p / n as f64;
                }
            }
        }
        for m in 0..4 {
            assert!((acc[m] - mean[m]).abs() < 1e-12);
        }
    }
}
