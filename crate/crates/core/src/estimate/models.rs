//! Named forward models and the fits built on them.
//!
//! Rates are fitted in rad/µs and times in µs so that all parameters are of
//! order one; results are converted back to SI.

use serde::Serialize;

use super::lm::{fit_nls, FitProblem, FitResult};
use crate::cqed::{reflectivity, CavityRates, CoupledResponse};
use crate::error::{Error, Result};
use crate::larmor::{gyromagnetic_ratio, DecayKind};
use crate::trace::{ScanTrace, TraceKind};

/// rad/s → rad/µs.
const PER_US: f64 = 1e-6;

/// Analytic gradients exist for these models so the finite-difference
/// Jacobian can be checked against them.
pub mod forms {
    /// offset − depth·k²/(k² + (x − c)²), p = [c, k, depth, offset].
    pub fn lorentzian_dip(x: f64, p: &[f64]) -> f64 {
        let (c, k, depth, offset) = (p[0], p[1], p[2], p[3]);
        offset - depth * k * k / (k * k + (x - c).powi(2))
    }

    pub fn lorentzian_dip_grad(x: f64, p: &[f64]) -> Vec<f64> {
        let (c, k, depth) = (p[0], p[1], p[2]);
        let u = x - c;
        let d = k * k + u * u;
        vec![
            -depth * k * k * 2.0 * u / (d * d),
            -depth * 2.0 * k * u * u / (d * d),
            -k * k / d,
            1.0,
        ]
    }

    /// κ + g_N² γ/(γ² + x²), p = [g_N, γ, κ].
    pub fn absorption(x: f64, p: &[f64]) -> f64 {
        p[2] + p[0] * p[0] * p[1] / (p[1] * p[1] + x * x)
    }

    pub fn absorption_grad(x: f64, p: &[f64]) -> Vec<f64> {
        let (g, gm) = (p[0], p[1]);
        let d = gm * gm + x * x;
        vec![2.0 * g * gm / d, g * g * (x * x - gm * gm) / (d * d), 1.0]
    }

    /// −g_N² x/(γ² + x²), p = [g_N, γ].
    pub fn dispersion(x: f64, p: &[f64]) -> f64 {
        -p[0] * p[0] * x / (p[1] * p[1] + x * x)
    }

    pub fn dispersion_grad(x: f64, p: &[f64]) -> Vec<f64> {
        let (g, gm) = (p[0], p[1]);
        let d = gm * gm + x * x;
        vec![-2.0 * g * x / d, 2.0 * g * g * x * gm / (d * d)]
    }

    /// g √N, p = [g].
    pub fn sqrt_n(x: f64, p: &[f64]) -> f64 {
        p[0] * x.sqrt()
    }

    pub fn sqrt_n_grad(x: f64, _p: &[f64]) -> Vec<f64> {
        vec![x.sqrt()]
    }

    /// √(ω_z² + a² I²), p = [ω_z, a].
    pub fn calibration(x: f64, p: &[f64]) -> f64 {
        (p[0] * p[0] + p[1] * p[1] * x * x).sqrt()
    }

    pub fn calibration_grad(x: f64, p: &[f64]) -> Vec<f64> {
        let f = calibration(x, p);
        vec![p[0] / f, p[1] * x * x / f]
    }

    /// [a cos ωτ + b cos 2ωτ] e^{−rτ} + c, p = [a, b, c, ω, r].
    pub fn larmor_exp(t: f64, p: &[f64]) -> f64 {
        (p[0] * (p[3] * t).cos() + p[1] * (2.0 * p[3] * t).cos()) * (-p[4] * t).exp() + p[2]
    }

    pub fn larmor_exp_grad(t: f64, p: &[f64]) -> Vec<f64> {
        let e = (-p[4] * t).exp();
        let (c1, c2) = ((p[3] * t).cos(), (2.0 * p[3] * t).cos());
        let (s1, s2) = ((p[3] * t).sin(), (2.0 * p[3] * t).sin());
        vec![
            c1 * e,
            c2 * e,
            1.0,
            -(p[0] * t * s1 + 2.0 * p[1] * t * s2) * e,
            -t * (p[0] * c1 + p[1] * c2) * e,
        ]
    }

    /// [a cos ωτ + b cos 2ωτ] e^{−sτ²} + c, p = [a, b, c, ω, s].
    pub fn larmor_gauss(t: f64, p: &[f64]) -> f64 {
        (p[0] * (p[3] * t).cos() + p[1] * (2.0 * p[3] * t).cos()) * (-p[4] * t * t).exp() + p[2]
    }

    pub fn larmor_gauss_grad(t: f64, p: &[f64]) -> Vec<f64> {
        let e = (-p[4] * t * t).exp();
        let (c1, c2) = ((p[3] * t).cos(), (2.0 * p[3] * t).cos());
        let (s1, s2) = ((p[3] * t).sin(), (2.0 * p[3] * t).sin());
        vec![
            c1 * e,
            c2 * e,
            1.0,
            -(p[0] * t * s1 + 2.0 * p[1] * t * s2) * e,
            -t * t * (p[0] * c1 + p[1] * c2) * e,
        ]
    }
}

fn weights_from_sigmas(n: usize, sigmas: Option<&[f64]>) -> Result<Vec<f64>> {
    match sigmas {
        None => Ok(vec![1.0; n]),
        Some(s) if s.len() == n => s
            .iter()
            .map(|&v| {
                if v > 0.0 && v.is_finite() {
                    Ok(1.0 / (v * v))
                } else {
                    Err(Error::domain(format!("standard deviations must be positive, got {v}")))
                }
            })
            .collect(),
        Some(s) => Err(Error::domain(format!("{} sigmas for {n} points", s.len()))),
    }
}

fn require_points(points: &[(f64, f64)], min: usize, what: &str) -> Result<()> {
    if points.len() < min {
        return Err(Error::DegenerateFit(format!("{what} needs at least {min} points, got {}", points.len())));
    }
    Ok(())
}

/// Value with its one-sigma standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

impl Estimate {
    fn from_fit(fit: &FitResult, i: usize, scale: f64) -> Self {
        Estimate { value: fit.params[i] * scale, std_error: fit.std_errors[i] * scale.abs() }
    }

    /// |value − truth| in units of the standard error.
    pub fn pull(&self, truth: f64) -> f64 {
        (self.value - truth).abs() / self.std_error
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DipFit {
    /// Dip center in the trace's x units (rad/s).
    pub center: Estimate,
    /// Half width at half maximum, identified with κ′.
    pub hwhm: Estimate,
    pub depth: Estimate,
    pub offset: Estimate,
    pub fit: FitResult,
}

/// Fits offset − depth·κ′²/(κ′² + (x − c)²) to a detuning trace.
pub fn fit_lorentzian_dip(trace: &ScanTrace) -> Result<DipFit> {
    trace.validate()?;
    if trace.len() < 5 {
        return Err(Error::DegenerateFit(format!("dip fit needs at least 5 samples, got {}", trace.len())));
    }
    let x: Vec<f64> = trace.x.iter().map(|v| v * PER_US).collect();
    let y = trace.y.clone();
    let n = y.len();
    let span = (x[n - 1] - x[0]).abs();
    let mut sorted = y.clone();
    sorted.sort_by(f64::total_cmp);
    let offset0 = sorted[(n * 9) / 10..].iter().sum::<f64>() / (n - (n * 9) / 10) as f64;
    let weights = trace.default_weights();
    let bounds = vec![
        (x[0].min(x[n - 1]), x[0].max(x[n - 1])),
        (1e-9, 10.0 * span),
        (f64::NEG_INFINITY, f64::INFINITY),
        (f64::NEG_INFINITY, f64::INFINITY),
    ];

    // starting guesses from running means of several widths; the best fit wins
    let mut best: Option<(FitProblem, FitResult)> = None;
    let mut last_depth = 0.0;
    for half_width in [1, 4, 16] {
        if half_width > 1 && 2 * half_width + 1 > n / 4 {
            break;
        }
        let smooth: Vec<f64> = (0..n)
            .map(|i| {
                let lo = i.saturating_sub(half_width);
                let hi = (i + half_width).min(n - 1);
                y[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
            })
            .collect();
        let imin = (0..n).min_by(|&a, &b| smooth[a].total_cmp(&smooth[b])).expect("non-empty");
        let depth0 = offset0 - smooth[imin];
        last_depth = depth0;
        if !(depth0 > 0.0) {
            continue;
        }
        let half = offset0 - depth0 / 2.0;
        let right = (imin..n).find(|&i| smooth[i] > half).unwrap_or(n - 1);
        let left = (0..=imin).rev().find(|&i| smooth[i] > half).unwrap_or(0);
        let k0 = (0.5 * (x[right] - x[left]).abs()).max(span / n as f64);
        let problem = FitProblem::new("lorentzian dip", forms::lorentzian_dip, x.clone(), y.clone(), vec![
            x[imin], k0, depth0, offset0,
        ])
        .with_weights(weights.clone())
        .with_bounds(bounds.clone());
        if let Ok(fit) = fit_nls(&problem) {
            if best.as_ref().is_none_or(|(_, b)| fit.cost < b.cost) {
                best = Some((problem, fit));
            }
        }
    }
    let Some((problem, mut fit)) = best else {
        return Err(Error::FlatSignal { depth: last_depth, sigma: 0.0 });
    };
    if trace.kind == TraceKind::Counts && trace.sigma.is_none() {
        // Poisson weights from the fitted mean rather than the noisy counts
        let n = trace.exposures.max(1) as f64;
        let w: Vec<f64> = problem.x.iter().map(|&x| n / forms::lorentzian_dip(x, &fit.params).max(0.5 / n)).collect();
        let mut second = problem.with_weights(w);
        second.initial = fit.params.clone();
        fit = fit_nls(&second)?;
    }
    let depth = Estimate::from_fit(&fit, 2, 1.0);
    if !(depth.value > 3.0 * depth.std_error) {
        return Err(Error::FlatSignal { depth: depth.value, sigma: depth.std_error });
    }
    Ok(DipFit {
        center: Estimate::from_fit(&fit, 0, 1.0 / PER_US),
        hwhm: Estimate::from_fit(&fit, 1, 1.0 / PER_US),
        depth,
        offset: Estimate::from_fit(&fit, 3, 1.0),
        fit,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct AbsorptionFit {
    pub g_n: Estimate,
    pub gamma_eff: Estimate,
    pub kappa: Estimate,
    /// False when g_N is fixed at zero and γ′ has no influence on the model.
    pub gamma_identifiable: bool,
    pub fit: FitResult,
}

/// Fits κ′(Δ) = κ + g_N² γ′/(γ′² + Δ²) to (Δ, κ′) points in rad/s.
/// `fixed_g_n` holds g_N at a given value.
pub fn fit_absorption(points: &[(f64, f64)], sigmas: Option<&[f64]>, fixed_g_n: Option<f64>) -> Result<AbsorptionFit> {
    require_points(points, 5, "absorption fit")?;
    let x: Vec<f64> = points.iter().map(|p| p.0 * PER_US).collect();
    let y: Vec<f64> = points.iter().map(|p| p.1 * PER_US).collect();
    let w = weights_from_sigmas(points.len(), sigmas.map(|s| s.iter().map(|v| v * PER_US).collect::<Vec<_>>()).as_deref())?;

    let ymin = y.iter().copied().fold(f64::INFINITY, f64::min);
    let i0 = (0..x.len()).min_by(|&a, &b| x[a].abs().total_cmp(&x[b].abs())).expect("non-empty");
    let height = (y[i0] - ymin).max(1e-6);
    // γ² from each point assuming the minimum sits on the far wing
    let mut est: Vec<f64> = x
        .iter()
        .zip(&y)
        .filter_map(|(&d, &k)| {
            let h = k - ymin;
            (h > 0.05 * height && h < 0.95 * height && d != 0.0).then(|| (d * d * h / (height - h)).sqrt())
        })
        .collect();
    est.sort_by(f64::total_cmp);
    let gamma0 = est.get(est.len() / 2).copied().unwrap_or_else(|| x.iter().map(|v| v.abs()).fold(0.0, f64::max) / 3.0).max(1e-3);
    let kappa0 = (ymin - 0.1 * height).max(1e-3 * height);
    let g0 = (height * gamma0).sqrt();

    let (init_g, identifiable) = match fixed_g_n {
        Some(g) => (g * PER_US, g != 0.0),
        None => (g0, true),
    };
    let mut problem = FitProblem::new("absorption", forms::absorption, x, y, vec![init_g, gamma0, kappa0])
        .with_weights(w)
        .with_absolute_sigma(sigmas.is_some())
        .with_bounds(vec![(0.0, f64::INFINITY), (1e-9, f64::INFINITY), (0.0, f64::INFINITY)]);
    if fixed_g_n.is_some() {
        problem = problem.fix(0);
        if !identifiable {
            problem = problem.fix(1);
        }
    }
    let fit = fit_nls(&problem)?;
    let mut gamma_eff = Estimate::from_fit(&fit, 1, 1.0 / PER_US);
    if !identifiable {
        gamma_eff.std_error = f64::INFINITY;
    }
    Ok(AbsorptionFit {
        g_n: Estimate::from_fit(&fit, 0, 1.0 / PER_US),
        gamma_eff,
        kappa: Estimate::from_fit(&fit, 2, 1.0 / PER_US),
        gamma_identifiable: identifiable,
        fit,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct DispersionFit {
    pub g_n: Estimate,
    pub gamma_eff: Estimate,
    pub fit: FitResult,
}

/// Fits Δc′ − Δc = −g_N² Δ/(γ′² + Δ²) to (Δ, shift) points in rad/s.
pub fn fit_dispersion(points: &[(f64, f64)], sigmas: Option<&[f64]>) -> Result<DispersionFit> {
    require_points(points, 3, "dispersion fit")?;
    if !(points.iter().any(|p| p.0 > 0.0) && points.iter().any(|p| p.0 < 0.0)) {
        return Err(Error::DegenerateFit("dispersion fit needs detunings of both signs".into()));
    }
    let x: Vec<f64> = points.iter().map(|p| p.0 * PER_US).collect();
    let y: Vec<f64> = points.iter().map(|p| p.1 * PER_US).collect();
    let w = weights_from_sigmas(points.len(), sigmas.map(|s| s.iter().map(|v| v * PER_US).collect::<Vec<_>>()).as_deref())?;
    let imax = (0..y.len()).max_by(|&a, &b| y[a].abs().total_cmp(&y[b].abs())).expect("non-empty");
    let gamma0 = x[imax].abs().max(1e-3);
    let g0 = (2.0 * gamma0 * y[imax].abs()).sqrt().max(1e-3);
    let problem = FitProblem::new("dispersion", forms::dispersion, x, y, vec![g0, gamma0])
        .with_weights(w)
        .with_absolute_sigma(sigmas.is_some())
        .with_bounds(vec![(0.0, f64::INFINITY), (1e-9, f64::INFINITY)]);
    let fit = fit_nls(&problem)?;
    Ok(DispersionFit {
        g_n: Estimate::from_fit(&fit, 0, 1.0 / PER_US),
        gamma_eff: Estimate::from_fit(&fit, 1, 1.0 / PER_US),
        fit,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct RabiFit {
    /// g_N² in (rad/s)²; may be consistent with zero.
    pub g_n_sq: Estimate,
    pub g_n: Estimate,
    pub fit: FitResult,
}

/// Reflectivity along Δ = Δc for collective coupling² `g2n` (rad/µs units).
fn rabi_model(x: f64, g2n: f64, gamma: f64, kappa: f64, kappa1: f64) -> f64 {
    let d = gamma * gamma + x * x;
    let resp = CoupledResponse { kappa_prime: kappa + g2n * gamma / d, delta_c_prime: x - g2n * x / d };
    let rates = CavityRates::from_decay(kappa1, kappa, 1.0).expect("validated rates");
    reflectivity(&rates, &resp)
}

/// Fits the reflectivity on the Δ = Δc diagonal with γ′ and the cavity
/// rates held fixed; the free parameter is g_N².
pub fn fit_rabi(trace: &ScanTrace, gamma_eff: f64, rates: &CavityRates) -> Result<RabiFit> {
    trace.validate()?;
    if trace.kind != TraceKind::Normalized {
        return Err(Error::domain("rabi fit expects a normalized reflectivity trace"));
    }
    if trace.len() < 3 {
        return Err(Error::DegenerateFit("rabi fit needs at least 3 samples".into()));
    }
    let (gm, k, k1) = (gamma_eff * PER_US, rates.kappa * PER_US, rates.kappa1 * PER_US);
    let x: Vec<f64> = trace.x.iter().map(|v| v * PER_US).collect();
    let model = move |x: f64, p: &[f64]| rabi_model(x, p[0], gm, k, k1);
    let xmax = x.iter().map(|v| v.abs()).fold(0.0, f64::max);
    // coarse scan of g_N² for a starting point
    let probe = FitProblem::new("rabi", model, x.clone(), trace.y.clone(), vec![0.0]);
    let mut best = (f64::INFINITY, 0.0);
    for i in 0..=200 {
        let g2 = (xmax * i as f64 / 200.0).powi(2);
        let c = probe.cost(&[g2]);
        if c < best.0 {
            best = (c, g2);
        }
    }
    let problem = FitProblem::new("rabi", model, x, trace.y.clone(), vec![best.1])
        .with_weights(trace.default_weights())
        .with_bounds(vec![(0.0, f64::INFINITY)]);
    let mut fit = fit_nls(&problem)?;
    if let Some(sigma) = &trace.sigma {
        // count-limited points: variance ∝ mean, with the scale s = y/σ²
        let scale: Vec<f64> = trace.y.iter().zip(sigma).map(|(&y, &s)| y.max(s) / (s * s)).collect();
        let w: Vec<f64> = problem
            .x
            .iter()
            .zip(&scale)
            .map(|(&x, &s)| s / model(x, &fit.params).max(1.0 / s))
            .collect();
        let mut second = problem.with_weights(w);
        second.initial = fit.params.clone();
        fit = fit_nls(&second)?;
    }
    let g_n_sq = Estimate::from_fit(&fit, 0, 1.0 / (PER_US * PER_US));
    let g = g_n_sq.value.max(0.0).sqrt();
    let g_n = Estimate {
        value: g,
        std_error: if g > 0.0 { g_n_sq.std_error / (2.0 * g) } else { g_n_sq.std_error.sqrt() },
    };
    Ok(RabiFit { g_n_sq, g_n, fit })
}

#[derive(Debug, Clone, Serialize)]
pub struct SqrtNFit {
    /// Single-ion coupling g (rad/s).
    pub g: Estimate,
    pub fit: FitResult,
}

/// Fits g_N = g√N to (N, g_N) points.
pub fn fit_sqrt_n(points: &[(f64, f64)], sigmas: Option<&[f64]>) -> Result<SqrtNFit> {
    require_points(points, 1, "square-root fit")?;
    if points.iter().any(|p| p.0 < 0.0) {
        return Err(Error::domain("ion numbers must be non-negative"));
    }
    let x: Vec<f64> = points.iter().map(|p| p.0).collect();
    let y: Vec<f64> = points.iter().map(|p| p.1 * PER_US).collect();
    let w = weights_from_sigmas(points.len(), sigmas.map(|s| s.iter().map(|v| v * PER_US).collect::<Vec<_>>()).as_deref())?;
    let num: f64 = x.iter().zip(&y).map(|(n, g)| n.sqrt() * g).sum();
    let den: f64 = x.iter().sum();
    if den == 0.0 {
        return Err(Error::DegenerateFit("all ion numbers are zero".into()));
    }
    let problem = FitProblem::new("sqrt N", forms::sqrt_n, x, y, vec![num / den])
        .with_weights(w)
        .with_absolute_sigma(sigmas.is_some());
    let fit = fit_nls(&problem)?;
    Ok(SqrtNFit { g: Estimate::from_fit(&fit, 0, 1.0 / PER_US), fit })
}

#[derive(Debug, Clone, Serialize)]
pub struct SlopeFit {
    pub slope: Estimate,
    pub fit: FitResult,
}

/// Fits y = s·x through the origin (cooperativity against ion number).
pub fn fit_proportional(points: &[(f64, f64)], sigmas: Option<&[f64]>) -> Result<SlopeFit> {
    require_points(points, 1, "proportional fit")?;
    let x: Vec<f64> = points.iter().map(|p| p.0).collect();
    let y: Vec<f64> = points.iter().map(|p| p.1).collect();
    let w = weights_from_sigmas(points.len(), sigmas)?;
    let sxx: f64 = x.iter().zip(&w).map(|(x, w)| w * x * x).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateFit("all abscissae are zero".into()));
    }
    let s0 = x.iter().zip(&y).zip(&w).map(|((x, y), w)| w * x * y).sum::<f64>() / sxx;
    let scale = x.iter().map(|v| v.abs()).fold(0.0, f64::max);
    // fit s·scale so the parameter is of order the largest y
    let xs: Vec<f64> = x.iter().map(|v| v / scale).collect();
    let problem = FitProblem::new("proportional", |x, p| p[0] * x, xs, y, vec![s0 * scale])
        .with_weights(w)
        .with_absolute_sigma(sigmas.is_some());
    let fit = fit_nls(&problem)?;
    Ok(SlopeFit { slope: Estimate::from_fit(&fit, 0, 1.0 / scale), fit })
}

#[derive(Debug, Clone, Serialize)]
pub struct EnvelopeFit {
    pub kind: DecayKind,
    pub a: Estimate,
    pub b: Estimate,
    pub c: Estimate,
    pub omega_l: Estimate,
    /// Decay rate 1/τ_e (s⁻¹) or 1/τ_g² (s⁻²).
    pub rate: Estimate,
    /// Best-fit τ_e or τ_g (s); infinite when the fitted rate is zero.
    pub timescale: f64,
    /// Profile-likelihood interval for the timescale (s), from Δχ² = 1.
    pub timescale_bounds: (f64, f64),
    pub fit: FitResult,
}

#[derive(Debug, Clone, Serialize)]
pub struct LarmorFit {
    pub exponential: EnvelopeFit,
    pub gaussian: EnvelopeFit,
}

/// Starting (a, b, c, ω) from a scan of the frequency with the linear
/// coefficients solved at each trial ω.
fn larmor_start(t: &[f64], y: &[f64], w: &[f64], range: Option<(f64, f64)>) -> (f64, f64, f64, f64) {
    let window = t.last().expect("non-empty") - t[0];
    let dt_min = t.windows(2).map(|p| p[1] - p[0]).fold(f64::INFINITY, f64::min);
    let resolution = 2.0 * std::f64::consts::PI / window;
    // ω itself below Nyquist; the 2ω term may alias
    let (w_lo, w_hi) = range.unwrap_or((resolution, std::f64::consts::PI / dt_min));
    let step = 0.1 * resolution;
    let mut best = (f64::INFINITY, (0.0, 0.0, 0.0, w_lo));
    let mut om = w_lo;
    while om <= w_hi {
        if let Some((a, b, c, cost)) = linear_larmor(t, y, w, om) {
            if cost < best.0 {
                best = (cost, (a, b, c, om));
            }
        }
        om += step;
    }
    best.1
}

fn linear_larmor(t: &[f64], y: &[f64], w: &[f64], om: f64) -> Option<(f64, f64, f64, f64)> {
    use nalgebra::{Matrix3, Vector3};
    let mut ata = Matrix3::zeros();
    let mut atb = Vector3::zeros();
    for ((&t, &y), &w) in t.iter().zip(y).zip(w) {
        let row = Vector3::new((om * t).cos(), (2.0 * om * t).cos(), 1.0);
        ata += w * row * row.transpose();
        atb += w * y * row;
    }
    let sol = ata.cholesky()?.solve(&atb);
    let cost = t
        .iter()
        .zip(y)
        .zip(w)
        .map(|((&t, &y), &w)| w * (y - sol[0] * (om * t).cos() - sol[1] * (2.0 * om * t).cos() - sol[2]).powi(2))
        .sum();
    Some((sol[0], sol[1], sol[2], cost))
}

/// Fits C(τ) with an exponential and a Gaussian envelope side by side.
/// `points` are (τ in s, C).
pub fn fit_larmor(points: &[(f64, f64)], sigmas: Option<&[f64]>) -> Result<LarmorFit> {
    require_points(points, 8, "larmor fit")?;
    if points.windows(2).any(|p| p[1].0 <= p[0].0) {
        return Err(Error::domain("larmor fit needs strictly increasing delays"));
    }
    let t: Vec<f64> = points.iter().map(|p| p.0 * 1e6).collect();
    let y: Vec<f64> = points.iter().map(|p| p.1).collect();
    let w = weights_from_sigmas(points.len(), sigmas)?;
    let (a0, b0, c0, om0) = larmor_start(&t, &y, &w, None);
    Ok(LarmorFit {
        exponential: fit_envelope(DecayKind::Exponential, &t, &y, &w, sigmas.is_some(), [a0, b0, c0, om0], true)?,
        gaussian: fit_envelope(DecayKind::Gaussian, &t, &y, &w, sigmas.is_some(), [a0, b0, c0, om0], true)?,
    })
}

/// Single-envelope fit. Without `profile` the timescale bounds come from
/// the curvature error of the rate instead of the profile likelihood.
/// `omega_range` (rad/s) limits the starting-frequency search, which
/// otherwise can settle on ω_L/2 when the second harmonic is weak.
pub fn fit_larmor_envelope(
    points: &[(f64, f64)],
    sigmas: Option<&[f64]>,
    kind: DecayKind,
    profile: bool,
    omega_range: Option<(f64, f64)>,
) -> Result<EnvelopeFit> {
    require_points(points, 8, "larmor fit")?;
    if points.windows(2).any(|p| p[1].0 <= p[0].0) {
        return Err(Error::domain("larmor fit needs strictly increasing delays"));
    }
    if kind == DecayKind::None {
        return Err(Error::domain("envelope fit needs an exponential or gaussian kind"));
    }
    let t: Vec<f64> = points.iter().map(|p| p.0 * 1e6).collect();
    let y: Vec<f64> = points.iter().map(|p| p.1).collect();
    let w = weights_from_sigmas(points.len(), sigmas)?;
    if let Some((lo, hi)) = omega_range {
        if !(lo > 0.0 && hi > lo) {
            return Err(Error::domain("omega range must satisfy 0 < lo < hi"));
        }
    }
    let range = omega_range.map(|(lo, hi)| (lo * 1e-6, hi * 1e-6));
    let (a0, b0, c0, om0) = larmor_start(&t, &y, &w, range);
    fit_envelope(kind, &t, &y, &w, sigmas.is_some(), [a0, b0, c0, om0], profile)
}

fn fit_envelope(
    kind: DecayKind,
    t: &[f64],
    y: &[f64],
    w: &[f64],
    absolute: bool,
    start: [f64; 4],
    profiled: bool,
) -> Result<EnvelopeFit> {
    let model: fn(f64, &[f64]) -> f64 = match kind {
        DecayKind::Gaussian => forms::larmor_gauss,
        _ => forms::larmor_exp,
    };
    let window = t.last().expect("non-empty") - t[0];
    // rates in µs⁻¹ or µs⁻²
    let rate_max = match kind {
        DecayKind::Gaussian => 1e3 / (window * window),
        _ => 1e3 / window,
    };
    let init_rate = 0.1 * rate_max * 1e-3;
    let bounds = vec![
        (f64::NEG_INFINITY, f64::INFINITY),
        (f64::NEG_INFINITY, f64::INFINITY),
        (f64::NEG_INFINITY, f64::INFINITY),
        (0.0, f64::INFINITY),
        (0.0, rate_max),
    ];
    let build = |p0: Vec<f64>| {
        FitProblem::new("larmor", model, t.to_vec(), y.to_vec(), p0)
            .with_weights(w.to_vec())
            .with_absolute_sigma(absolute)
            .with_bounds(bounds.clone())
    };
    let p0 = vec![start[0], start[1], start[2], start[3], init_rate];
    let fit = fit_nls(&build(p0))?;

    // profile likelihood for the decay rate; the threshold uses the
    // residual variance as the noise scale
    let sigma2 = if absolute {
        1.0
    } else if fit.dof > 0 {
        fit.chi2_reduced
    } else {
        0.0
    };
    let threshold = fit.cost + sigma2.max(f64::MIN_POSITIVE);
    let profile = |r: f64| -> f64 {
        let mut p = fit.params.clone();
        p[4] = r;
        match fit_nls(&build(p).fix(4)) {
            Ok(f) => f.cost,
            Err(_) => f64::INFINITY,
        }
    };
    let r_hat = fit.params[4];
    if !profiled {
        let e = fit.std_errors[4];
        let (lo, hi) = ((r_hat - e).max(0.0), (r_hat + e).min(rate_max));
        return Ok(envelope_result(kind, fit, hi, lo));
    }
    let step0 = fit.std_errors[4].max(1e-6 * rate_max);
    let upper_rate = {
        let mut lo = r_hat;
        let mut hi = (r_hat + step0).min(rate_max);
        while profile(hi) < threshold && hi < rate_max {
            lo = hi;
            hi = (r_hat + 2.0 * (hi - r_hat)).min(rate_max);
        }
        if profile(hi) < threshold {
            rate_max
        } else {
            bisect(&profile, lo, hi, threshold)
        }
    };
    let lower_rate = if r_hat == 0.0 || profile(0.0) < threshold {
        0.0
    } else {
        let mut hi = r_hat;
        let mut lo = (r_hat - step0).max(0.0);
        while profile(lo) < threshold && lo > 0.0 {
            hi = lo;
            lo = (r_hat - 2.0 * (r_hat - lo)).max(0.0);
        }
        bisect(&profile, lo, hi, threshold)
    };
    Ok(envelope_result(kind, fit, upper_rate, lower_rate))
}

fn envelope_result(kind: DecayKind, fit: FitResult, upper_rate: f64, lower_rate: f64) -> EnvelopeFit {
    let r_hat = fit.params[4];
    let to_timescale = |r: f64| -> f64 {
        if r <= 0.0 {
            return f64::INFINITY;
        }
        match kind {
            DecayKind::Gaussian => r.powf(-0.5) * 1e-6,
            _ => 1e-6 / r,
        }
    };
    let rate_scale = match kind {
        DecayKind::Gaussian => 1e12,
        _ => 1e6,
    };
    EnvelopeFit {
        kind,
        a: Estimate::from_fit(&fit, 0, 1.0),
        b: Estimate::from_fit(&fit, 1, 1.0),
        c: Estimate::from_fit(&fit, 2, 1.0),
        omega_l: Estimate::from_fit(&fit, 3, 1e6),
        rate: Estimate::from_fit(&fit, 4, rate_scale),
        timescale: to_timescale(r_hat),
        timescale_bounds: (to_timescale(upper_rate), to_timescale(lower_rate)),
        fit,
    }
}

/// Root of f(x) = target on [lo, hi] with f(lo) < target ≤ f(hi) or the reverse.
fn bisect(f: &dyn Fn(f64) -> f64, mut lo: f64, mut hi: f64, target: f64) -> f64 {
    let below_at_lo = f(lo) < target;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if (f(mid) < target) == below_at_lo {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo).abs() <= 1e-10 * hi.abs().max(lo.abs()) {
            break;
        }
    }
    0.5 * (lo + hi)
}

#[derive(Debug, Clone, Serialize)]
pub struct CalibrationFit {
    pub omega_z: Estimate,
    /// dω_x/dI (rad/s/A).
    pub slope: Estimate,
    /// B_z (T).
    pub b_z: Estimate,
    /// dB_x/dI (T/A).
    pub b_per_amp: Estimate,
    pub fit: FitResult,
}

/// Fits ω_L(I) = √(ω_z² + a² I²) to (I in A, ω_L in rad/s) points.
pub fn fit_calibration(points: &[(f64, f64)], sigmas: Option<&[f64]>, g_factor: f64) -> Result<CalibrationFit> {
    require_points(points, 2, "calibration fit")?;
    // mA and rad/µs
    let x: Vec<f64> = points.iter().map(|p| p.0 * 1e3).collect();
    let y: Vec<f64> = points.iter().map(|p| p.1 * PER_US).collect();
    let w = weights_from_sigmas(points.len(), sigmas.map(|s| s.iter().map(|v| v * PER_US).collect::<Vec<_>>()).as_deref())?;
    let i0 = (0..x.len()).min_by(|&a, &b| x[a].abs().total_cmp(&x[b].abs())).expect("non-empty");
    let i1 = (0..x.len()).max_by(|&a, &b| x[a].abs().total_cmp(&x[b].abs())).expect("non-empty");
    let wz0 = y[i0].abs().max(1e-9);
    let a0 = if x[i1] != 0.0 { ((y[i1] * y[i1] - wz0 * wz0).max(0.0)).sqrt() / x[i1].abs() } else { 0.0 };
    let a0 = if a0 > 0.0 { a0 } else { wz0 / x[i1].abs().max(1.0) };
    let problem = FitProblem::new("calibration", forms::calibration, x, y, vec![wz0, a0])
        .with_weights(w)
        .with_absolute_sigma(sigmas.is_some())
        .with_bounds(vec![(0.0, f64::INFINITY), (0.0, f64::INFINITY)]);
    let fit = fit_nls(&problem)?;
    let gm = gyromagnetic_ratio(g_factor);
    let omega_z = Estimate::from_fit(&fit, 0, 1.0 / PER_US);
    let slope = Estimate::from_fit(&fit, 1, 1e3 / PER_US);
    Ok(CalibrationFit {
        b_z: Estimate { value: omega_z.value / gm, std_error: omega_z.std_error / gm },
        b_per_amp: Estimate { value: slope.value / gm, std_error: slope.std_error / gm },
        omega_z,
        slope,
        fit,
    })
}
