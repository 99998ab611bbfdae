//! Weighted nonlinear least squares by Levenberg–Marquardt.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};

pub const MAX_ITERATIONS: usize = 500;
pub const COST_TOLERANCE: f64 = 1e-10;
pub const GRADIENT_TOLERANCE: f64 = 1e-8;

type ModelFn<'a> = dyn Fn(f64, &[f64]) -> f64 + 'a;

/// A model, weighted data and the starting point of a fit.
pub struct FitProblem<'a> {
    pub name: String,
    model: Box<ModelFn<'a>>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub weights: Vec<f64>,
    pub initial: Vec<f64>,
    pub bounds: Option<Vec<(f64, f64)>>,
    pub fixed: Vec<bool>,
    /// Treat the weights as exact inverse variances: the covariance is not
    /// rescaled by the reduced χ².
    pub absolute_sigma: bool,
}

impl<'a> FitProblem<'a> {
    pub fn new(
        name: impl Into<String>,
        model: impl Fn(f64, &[f64]) -> f64 + 'a,
        x: Vec<f64>,
        y: Vec<f64>,
        initial: Vec<f64>,
    ) -> Self {
        let n = x.len();
        let p = initial.len();
        FitProblem {
            name: name.into(),
            model: Box::new(model),
            x,
            y,
            weights: vec![1.0; n],
            initial,
            bounds: None,
            fixed: vec![false; p],
            absolute_sigma: false,
        }
    }

    pub fn with_weights(mut self, w: Vec<f64>) -> Self {
        self.weights = w;
        self
    }

    pub fn with_absolute_sigma(mut self, absolute: bool) -> Self {
        self.absolute_sigma = absolute;
        self
    }

    pub fn with_bounds(mut self, b: Vec<(f64, f64)>) -> Self {
        self.bounds = Some(b);
        self
    }

    pub fn fix(mut self, index: usize) -> Self {
        self.fixed[index] = true;
        self
    }

    pub fn eval(&self, x: f64, p: &[f64]) -> f64 {
        (self.model)(x, p)
    }

    /// Weighted squared residual sum Σ wᵢ (yᵢ − f(xᵢ; p))².
    pub fn cost(&self, p: &[f64]) -> f64 {
        self.x
            .iter()
            .zip(&self.y)
            .zip(&self.weights)
            .map(|((&x, &y), &w)| w * (y - self.eval(x, p)).powi(2))
            .sum()
    }

    fn free_indices(&self) -> Vec<usize> {
        (0..self.initial.len()).filter(|&i| !self.fixed[i]).collect()
    }

    fn validate(&self) -> Result<()> {
        let n = self.x.len();
        if self.y.len() != n || self.weights.len() != n {
            return Err(Error::domain(format!(
                "{}: x, y and weight lengths differ ({}, {}, {})",
                self.name,
                n,
                self.y.len(),
                self.weights.len()
            )));
        }
        if self.fixed.len() != self.initial.len() {
            return Err(Error::domain(format!("{}: fixed mask length mismatch", self.name)));
        }
        if self.weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::domain(format!("{}: weights must be finite and non-negative", self.name)));
        }
        if self.initial.iter().chain(&self.x).chain(&self.y).any(|v| !v.is_finite()) {
            return Err(Error::domain(format!("{}: non-finite data or initial parameters", self.name)));
        }
        let free = self.free_indices().len();
        if free == 0 {
            return Err(Error::DegenerateFit(format!("{}: no free parameters", self.name)));
        }
        if n < free {
            return Err(Error::DegenerateFit(format!(
                "{}: {n} data points for {free} free parameters",
                self.name
            )));
        }
        if let Some(b) = &self.bounds {
            if b.len() != self.initial.len() {
                return Err(Error::domain(format!("{}: bounds length mismatch", self.name)));
            }
            for (i, (&p, &(lo, hi))) in self.initial.iter().zip(b).enumerate() {
                if !(lo <= p && p <= hi) {
                    return Err(Error::domain(format!(
                        "{}: initial parameter {i} = {p} outside [{lo}, {hi}]",
                        self.name
                    )));
                }
            }
        }
        Ok(())
    }

    fn clamp(&self, p: &mut [f64]) {
        if let Some(b) = &self.bounds {
            for (v, &(lo, hi)) in p.iter_mut().zip(b) {
                *v = v.clamp(lo, hi);
            }
        }
    }

    fn step_for(&self, j: usize, p: &[f64]) -> (f64, f64) {
        let h = 6e-6 * p[j].abs().max(1e-3);
        match &self.bounds {
            // one-sided near a bound
            Some(b) if p[j] - h < b[j].0 => (0.0, h),
            Some(b) if p[j] + h > b[j].1 => (h, 0.0),
            _ => (h, h),
        }
    }

    /// Central-difference Jacobian of the model values, rows = data, cols = `cols`.
    pub fn jacobian(&self, p: &[f64], cols: &[usize]) -> DMatrix<f64> {
        let mut jac = DMatrix::zeros(self.x.len(), cols.len());
        let mut q = p.to_vec();
        for (c, &j) in cols.iter().enumerate() {
            let (hm, hp) = self.step_for(j, p);
            q[j] = p[j] + hp;
            let plus: Vec<f64> = self.x.iter().map(|&x| self.eval(x, &q)).collect();
            q[j] = p[j] - hm;
            for (i, &x) in self.x.iter().enumerate() {
                jac[(i, c)] = (plus[i] - self.eval(x, &q)) / (hp + hm);
            }
            q[j] = p[j];
        }
        jac
    }
}

/// Estimated parameters with curvature-based standard errors.
#[derive(Debug, Clone, Serialize)]
pub struct FitResult {
    pub name: String,
    pub params: Vec<f64>,
    /// Zero for fixed parameters.
    pub std_errors: Vec<f64>,
    pub chi2_reduced: f64,
    pub cost: f64,
    pub dof: usize,
    pub converged: bool,
    pub iterations: usize,
    pub gradient_norm: f64,
}

impl FitResult {
    pub fn param(&self, i: usize) -> (f64, f64) {
        (self.params[i], self.std_errors[i])
    }
}

/// Minimizes Σ wᵢ rᵢ² over the free parameters.
///
/// Fails with [`Error::DegenerateFit`] when the Gauss–Newton curvature of
/// the free parameters is singular at the solution.
pub fn fit_nls(problem: &FitProblem) -> Result<FitResult> {
    problem.validate()?;
    let free = problem.free_indices();
    let nf = free.len();
    let w = DVector::from_column_slice(&problem.weights);
    let residuals = |p: &[f64]| -> DVector<f64> {
        DVector::from_iterator(
            problem.x.len(),
            problem.x.iter().zip(&problem.y).map(|(&x, &y)| y - problem.eval(x, p)),
        )
    };

    let mut p = problem.initial.clone();
    let mut r = residuals(&p);
    let mut cost = r.component_mul(&r).dot(&w);
    if !cost.is_finite() {
        return Err(Error::Numeric {
            routine: "levenberg-marquardt",
            diagnostics: format!("{}: non-finite cost at the initial parameters", problem.name),
        });
    }
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    let mut grad_norm;

    loop {
        let jac = problem.jacobian(&p, &free);
        let jw = DMatrix::from_fn(jac.nrows(), nf, |i, j| jac[(i, j)] * w[i]);
        let jtj = jac.transpose() * &jw;
        // gradient of ½cost along the model-increase direction
        let g = jw.transpose() * &r;
        grad_norm = projected_gradient_norm(problem, &p, &free, &g);
        if cost == 0.0 || grad_norm < GRADIENT_TOLERANCE {
            converged = true;
            break;
        }
        if iterations >= MAX_ITERATIONS {
            break;
        }
        iterations += 1;

        let diag_max = jtj.diagonal().max();
        let mut accepted = false;
        while lambda < 1e16 {
            let mut a = jtj.clone();
            for k in 0..nf {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-12 * diag_max).max(f64::MIN_POSITIVE);
            }
            let Some(chol) = a.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            let delta = chol.solve(&g);
            let mut trial = p.clone();
            for (k, &j) in free.iter().enumerate() {
                trial[j] += delta[k];
            }
            problem.clamp(&mut trial);
            let rt = residuals(&trial);
            let ct = rt.component_mul(&rt).dot(&w);
            if ct.is_finite() && ct <= cost {
                let rel = (cost - ct) / cost.max(f64::MIN_POSITIVE);
                p = trial;
                r = rt;
                cost = ct;
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                if rel < COST_TOLERANCE {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            // no descent direction left at machine precision
            converged = true;
            let jac = problem.jacobian(&p, &free);
            let jw = DMatrix::from_fn(jac.nrows(), nf, |i, j| jac[(i, j)] * w[i]);
            grad_norm = projected_gradient_norm(problem, &p, &free, &(jw.transpose() * &r));
            break;
        }
        if converged {
            let jac = problem.jacobian(&p, &free);
            let jw = DMatrix::from_fn(jac.nrows(), nf, |i, j| jac[(i, j)] * w[i]);
            grad_norm = projected_gradient_norm(problem, &p, &free, &(jw.transpose() * &r));
            break;
        }
    }

    let dof = problem.x.len() - nf;
    let chi2_reduced = if dof > 0 { cost / dof as f64 } else { 0.0 };
    let covariance = curvature_inverse(problem, &p, &free, &w)?;
    let mut std_errors = vec![0.0; p.len()];
    let scale = if dof > 0 && !problem.absolute_sigma { chi2_reduced } else { 1.0 };
    for (k, &j) in free.iter().enumerate() {
        std_errors[j] = (covariance[(k, k)] * scale).max(0.0).sqrt();
    }
    Ok(FitResult {
        name: problem.name.clone(),
        params: p,
        std_errors,
        chi2_reduced,
        cost,
        dof,
        converged,
        iterations,
        gradient_norm: grad_norm,
    })
}

fn projected_gradient_norm(problem: &FitProblem, p: &[f64], free: &[usize], g: &DVector<f64>) -> f64 {
    free.iter()
        .enumerate()
        .map(|(k, &j)| {
            // g points toward increasing parameters that reduce the cost
            let blocked = problem.bounds.as_ref().is_some_and(|b| {
                (p[j] <= b[j].0 && g[k] < 0.0) || (p[j] >= b[j].1 && g[k] > 0.0)
            });
            if blocked {
                0.0
            } else {
                2.0 * g[k].abs()
            }
        })
        .fold(0.0, f64::max)
}

/// (JᵀWJ)⁻¹ over the free parameters.
fn curvature_inverse(problem: &FitProblem, p: &[f64], free: &[usize], w: &DVector<f64>) -> Result<DMatrix<f64>> {
    let jac = problem.jacobian(p, free);
    let jw = DMatrix::from_fn(jac.nrows(), free.len(), |i, j| jac[(i, j)] * w[i]);
    let jtj = jac.transpose() * jw;
    // normalize to unit diagonal before judging conditioning
    let d: Vec<f64> = (0..free.len()).map(|k| jtj[(k, k)].sqrt()).collect();
    if d.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(Error::DegenerateFit(format!(
            "{}: a free parameter does not influence the model",
            problem.name
        )));
    }
    let scaled = DMatrix::from_fn(free.len(), free.len(), |i, j| jtj[(i, j)] / (d[i] * d[j]));
    let eig = scaled.clone().symmetric_eigenvalues();
    let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if lo <= 1e-14 * hi {
        return Err(Error::DegenerateFit(format!(
            "{}: singular curvature (condition {:.1e})",
            problem.name,
            hi / lo.max(f64::MIN_POSITIVE)
        )));
    }
    let inv = scaled
        .cholesky()
        .ok_or_else(|| Error::DegenerateFit(format!("{}: curvature not positive definite", problem.name)))?
        .inverse();
    Ok(DMatrix::from_fn(free.len(), free.len(), |i, j| inv[(i, j)] / (d[i] * d[j])))
}
