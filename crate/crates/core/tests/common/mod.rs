//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use ccqed::crystal::{CrystalSpec, ModeGeometry};

/// Adaptive Simpson quadrature with Richardson correction.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn step(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    step(f, a, b, fa, fm, fb, whole, tol, 50)
}

/// ⟨γξ⟩ and ⟨(Δ − kv)ξ⟩ over a Maxwell–Boltzmann velocity distribution with
/// rms velocity `vd`, integrated directly in v.
pub fn thermal_oracle(gamma: f64, delta: f64, k: f64, vd: f64) -> (f64, f64) {
    let kernel = |v: f64| {
        let kv2 = (k * v).powi(2);
        let s = gamma * gamma + delta * delta;
        (s + kv2) / (s * s + 2.0 * (gamma * gamma - delta * delta) * kv2 + kv2 * kv2)
    };
    let pdf = |v: f64| (-v * v / (2.0 * vd * vd)).exp() / (vd * (2.0 * PI).sqrt());
    let lim = 12.0 * vd;
    let scale = 1.0 / (gamma * gamma + delta * delta);
    let tol = 1e-14 * scale * gamma;
    // split at v = 0 and at the resonant velocities to keep the integrand smooth per panel
    let mut cuts = vec![-lim, 0.0, lim];
    for r in [delta / k, -delta / k] {
        if r.abs() < lim && r != 0.0 {
            cuts.push(r);
        }
    }
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let integrate = |g: &dyn Fn(f64) -> f64| -> f64 {
        cuts.windows(2).map(|w| adaptive_simpson(g, w[0], w[1], tol)).sum()
    };
    let absorption = integrate(&|v| pdf(v) * gamma * kernel(v));
    let dispersion = integrate(&|v| pdf(v) * (delta - k * v) * kernel(v));
    (absorption, dispersion)
}

/// Monte-Carlo effective ion number: transverse positions drawn from the
/// mode's own Gaussian, axial position uniform over the crystal length.
pub fn monte_carlo_ion_count(c: &CrystalSpec, mode: &ModeGeometry, samples: usize, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w0 = mode.waist;
    let normal = Normal::new(0.0, 0.5 * w0).unwrap();
    let (l, r) = (c.half_length, c.radius);
    let (mut sum, mut sum2) = (0.0, 0.0);
    for _ in 0..samples {
        let x: f64 = normal.sample(&mut rng);
        let y: f64 = normal.sample(&mut rng);
        let z: f64 = rng.random_range(-l..l);
        let (dx, dy) = (x - c.offset_x, y - c.offset_y);
        let est = if dx * dx + dy * dy <= r * r * (1.0 - z * z / (l * l)) {
            let w = w0 * (1.0 + (z / mode.rayleigh_z0).powi(2)).sqrt();
            let r2 = x * x + y * y;
            // f / p with p the sampling density
            2.0 * l * 0.5 * (w0 / w).powi(2) * (PI * w0 * w0 / 2.0) * (-2.0 * r2 * (1.0 / (w * w) - 1.0 / (w0 * w0))).exp()
        } else {
            0.0
        };
        sum += est;
        sum2 += est * est;
    }
    let n = samples as f64;
    let mean = sum / n;
    let se = ((sum2 / n - mean * mean) / n).sqrt();
    let scale = c.pump_efficiency * c.density;
    (scale * mean, scale * se)
}

/// Populations after rotating |3/2⟩ about x by θ = ω_x τ:
/// P(3/2 − k) = C(3, k) p^k (1 − p)^(3 − k) with p = sin²(θ/2).
pub fn binomial_rotation(theta: f64) -> [f64; 4] {
    let p = (theta / 2.0).sin().powi(2);
    let q = 1.0 - p;
    // index 0 is m = −3/2 (k = 3)
    [p.powi(3), 3.0 * p * p * q, 3.0 * p * q * q, q.powi(3)]
}

/// |DFT|² of a real sequence, bins 0..=n/2.
pub fn power_spectrum(y: &[f64]) -> Vec<f64> {
    let n = y.len();
    (0..=n / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (j, &v) in y.iter().enumerate() {
                let ph = -2.0 * PI * (k * j) as f64 / n as f64;
                re += v * ph.cos();
                im += v * ph.sin();
            }
            re * re + im * im
        })
        .collect()
}
