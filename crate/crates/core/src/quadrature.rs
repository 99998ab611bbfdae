//! Deterministic numerical quadrature: adaptive Gauss–Kronrod on finite
//! intervals and Gauss–Hermite rules for Gaussian-weighted integrals.

use std::sync::OnceLock;

use crate::error::{Error, Result};

// 15-point Kronrod nodes on [-1, 1] (non-negative half) with the embedded
// 7-point Gauss rule.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy)]
pub struct Integral {
    pub value: f64,
    pub error_estimate: f64,
    pub evaluations: usize,
}

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

/// Globally adaptive Gauss–Kronrod (7/15) integration of `f` over `[a, b]`.
///
/// Subdivides the interval with the largest error estimate until the summed
/// error is below `max(abs_tol, rel_tol·|I|)`. Evaluation order depends only
/// on the inputs, so results are bitwise reproducible.
pub fn integrate<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
    max_intervals: usize,
) -> Result<Integral> {
    if a == b {
        return Ok(Integral { value: 0.0, error_estimate: 0.0, evaluations: 0 });
    }
    let (v, e) = gk15(&mut f, a, b);
    // (lo, hi, value, error)
    let mut intervals = vec![(a, b, v, e)];
    let mut evaluations = 15;
    loop {
        let value: f64 = intervals.iter().map(|s| s.2).sum();
        let error: f64 = intervals.iter().map(|s| s.3).sum();
        if error <= abs_tol.max(rel_tol * value.abs()) {
            return Ok(Integral { value, error_estimate: error, evaluations });
        }
        if intervals.len() >= max_intervals {
            return Err(Error::Numeric {
                routine: "adaptive Gauss-Kronrod",
                diagnostics: format!(
                    "{} subintervals on [{a:e}, {b:e}]: value {value:e}, error estimate {error:e}, \
                     requested rel {rel_tol:e} / abs {abs_tol:e}",
                    intervals.len()
                ),
            });
        }
        let (worst, _) = intervals
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, s)| if s.3 > acc.1 { (i, s.3) } else { acc });
        let (lo, hi, _, _) = intervals.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gk15(&mut f, lo, mid);
        let (v2, e2) = gk15(&mut f, mid, hi);
        evaluations += 30;
        intervals.push((lo, mid, v1, e1));
        intervals.push((mid, hi, v2, e2));
    }
}

/// Gauss–Hermite rule: nodes and weights for ∫ e^{-x²} g(x) dx ≈ Σ wᵢ g(xᵢ).
#[derive(Debug, Clone)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermite {
    /// Builds an `n`-point rule. Roots of the Hermite polynomial are
    /// bracketed by sign changes on a grid finer than the smallest root
    /// spacing, then polished by safeguarded Newton iteration.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Hermite rule needs at least one node");
        let nf = n as f64;
        let edge = (2.0 * nf + 1.0).sqrt();
        let step = 0.2 * std::f64::consts::PI / edge;
        let mut positive = Vec::with_capacity(n / 2 + 1);
        let mut x0 = if n % 2 == 1 { step * 0.5 } else { 0.0 };
        let mut f0 = hermite_scaled(n, x0).0;
        while positive.len() < n / 2 {
            let x1 = x0 + step;
            let f1 = hermite_scaled(n, x1).0;
            if f0 == 0.0 {
                positive.push(x0);
            } else if f0.signum() != f1.signum() {
                positive.push(polish_root(n, x0, x1));
            }
            assert!(x1 < edge + 10.0, "missed Hermite roots for n = {n}");
            x0 = x1;
            f0 = f1;
        }
        let mut nodes = Vec::with_capacity(n);
        nodes.extend(positive.iter().rev().map(|&x| -x));
        if n % 2 == 1 {
            nodes.push(0.0);
        }
        nodes.extend(positive.iter().copied());
        let weights = nodes
            .iter()
            .map(|&x| {
                let (_, d, log_scale) = hermite_scaled(n, x);
                // w = 2 / (H'_n)² in the orthonormal normalization
                (std::f64::consts::LN_2 - 2.0 * (d.abs().ln() + log_scale)).exp()
            })
            .collect();
        GaussHermite { nodes, weights }
    }

    /// Cached rule for `64·2^k` nodes, `k ≤ 5`.
    pub fn cached(level: usize) -> &'static GaussHermite {
        static RULES: [OnceLock<GaussHermite>; 6] = [
            OnceLock::new(),
            OnceLock::new(),
            OnceLock::new(),
            OnceLock::new(),
            OnceLock::new(),
            OnceLock::new(),
        ];
        RULES[level].get_or_init(|| GaussHermite::new(64 << level))
    }

    pub const MAX_LEVEL: usize = 5;

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Orthonormal Hermite polynomial value and derivative at `x`, returned as
/// `(p, dp, log_scale)` with the true values equal to `p·e^log_scale` and
/// `dp·e^log_scale`. Rescaling keeps the recurrence finite for large `n`.
fn hermite_scaled(n: usize, x: f64) -> (f64, f64, f64) {
    let mut p1 = std::f64::consts::PI.powf(-0.25);
    let mut p2 = 0.0;
    let mut log_scale = 0.0;
    for j in 1..=n {
        let jf = j as f64;
        let p3 = p2;
        p2 = p1;
        p1 = x * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
        if p1.abs() > 1e150 {
            p1 *= 1e-150;
            p2 *= 1e-150;
            log_scale += 150.0 * std::f64::consts::LN_10;
        }
    }
    (p1, (2.0 * n as f64).sqrt() * p2, log_scale)
}

/// Newton iteration kept inside the bracket `[lo, hi]`, falling back to bisection.
fn polish_root(n: usize, mut lo: f64, mut hi: f64) -> f64 {
    let f_lo = hermite_scaled(n, lo).0;
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let (f, d, _) = hermite_scaled(n, x);
        if f == 0.0 {
            return x;
        }
        if f.signum() == f_lo.signum() {
            lo = x;
        } else {
            hi = x;
        }
        let newton = x - f / d;
        let next = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if (next - x).abs() <= 1e-15 * x.abs().max(1.0) {
            return next;
        }
        x = next;
    }
    x
}
