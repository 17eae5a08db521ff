use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

use super::linear::check_lambda;
use super::{Coefficients, DesignMatrix, ModelKind};
use crate::error::{Error, Result};

pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + eᵗ)` without overflow.
fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticOptions {
    /// Converged when `‖∇f‖∞ ≤ tol · N`.
    pub tol: f64,
    pub max_iter: usize,
    /// Number of correction pairs kept by L-BFGS.
    pub memory: usize,
}

impl Default for LogisticOptions {
    fn default() -> Self {
        LogisticOptions {
            tol: 1e-8,
            max_iter: 1000,
            memory: 10,
        }
    }
}

/// Penalized negative log-likelihood on standardized features.
///
/// Parameters are laid out as `θ = [intercept, β₁ … β_k]` over the retained
/// columns; only β is penalized:
/// `f(θ) = Σᵢ [ln(1 + e^{ηᵢ}) − yᵢηᵢ] + λ‖β‖²`, `η = θ₀ + Zβ`.
#[derive(Debug, Clone)]
pub struct LogisticObjective {
    z: DMatrix<f64>,
    kept: Vec<usize>,
    y: DVector<f64>,
    lambda: f64,
}

impl LogisticObjective {
    pub fn new(x: &DesignMatrix, labels: &[bool], lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        if labels.len() != x.rows() {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for {} rows",
                labels.len(),
                x.rows()
            )));
        }
        let positives = labels.iter().filter(|&&l| l).count();
        if positives == 0 || positives == labels.len() {
            return Err(Error::validation("logistic regression needs both classes present"));
        }
        let std = x.standardized();
        let y = DVector::from_iterator(labels.len(), labels.iter().map(|&l| if l { 1.0 } else { 0.0 }));
        Ok(LogisticObjective {
            z: std.z,
            kept: std.kept,
            y,
            lambda,
        })
    }

    /// Length of θ.
    pub fn dim(&self) -> usize {
        self.z.ncols() + 1
    }

    pub fn rows(&self) -> usize {
        self.z.nrows()
    }

    fn linear(&self, theta: &[f64]) -> DVector<f64> {
        let beta = DVector::from_column_slice(&theta[1..]);
        let mut eta = &self.z * beta;
        eta.add_scalar_mut(theta[0]);
        eta
    }

    fn penalty(&self, theta: &[f64]) -> f64 {
        self.lambda * theta[1..].iter().map(|b| b * b).sum::<f64>()
    }

    pub fn value(&self, theta: &[f64]) -> f64 {
        let eta = self.linear(theta);
        let nll: f64 = eta.iter().zip(self.y.iter()).map(|(&e, &y)| softplus(e) - y * e).sum();
        nll + self.penalty(theta)
    }

    pub fn gradient(&self, theta: &[f64]) -> Vec<f64> {
        self.value_and_gradient(theta).1
    }

    pub fn value_and_gradient(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        let eta = self.linear(theta);
        let mut nll = 0.0;
        let mut resid = DVector::zeros(eta.len());
        for i in 0..eta.len() {
            nll += softplus(eta[i]) - self.y[i] * eta[i];
            resid[i] = sigmoid(eta[i]) - self.y[i];
        }
        let gz = self.z.tr_mul(&resid);
        let mut grad = Vec::with_capacity(self.dim());
        grad.push(resid.sum());
        grad.extend(gz.iter().zip(&theta[1..]).map(|(g, b)| g + 2.0 * self.lambda * b));
        (nll + self.penalty(theta), grad)
    }

    /// True when every training point lies strictly on its own side.
    fn separates(&self, theta: &[f64]) -> bool {
        let eta = self.linear(theta);
        eta.iter()
            .zip(self.y.iter())
            .all(|(&e, &y)| if y > 0.5 { e > 0.0 } else { e < 0.0 })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// L-BFGS two-loop recursion: returns `−H∇f`.
fn lbfgs_direction(grad: &[f64], history: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q = grad.to_vec();
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y, rho) in history.iter().rev() {
        let a = rho * dot(s, &q);
        q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
        alphas.push(a);
    }
    let gamma = match history.back() {
        Some((s, y, _)) => dot(s, y) / dot(y, y),
        None => 1.0 / inf_norm(grad).max(1.0),
    };
    q.iter_mut().for_each(|v| *v *= gamma);
    for ((s, y, rho), a) in history.iter().zip(alphas.into_iter().rev()) {
        let b = rho * dot(y, &q);
        q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

/// Binary logistic regression fitted by L-BFGS with Armijo backtracking,
/// starting from zero. Every accepted step lowers the objective, so the
/// recorded trace is non-increasing.
///
/// With `lambda == 0` on linearly separable data the likelihood has no finite
/// maximizer. The fit stops once a separating iterate has a small loss and
/// reports `converged = false` with a warning.
pub fn fit_logistic(x: &DesignMatrix, labels: &[bool], lambda: f64, opts: &LogisticOptions) -> Result<Coefficients> {
    let obj = LogisticObjective::new(x, labels, lambda)?;
    let n = obj.rows() as f64;
    let mut theta = vec![0.0; obj.dim()];
    let (mut f, mut g) = obj.value_and_gradient(&theta);
    let mut trace = vec![f];
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.memory);
    let mut converged = false;
    let mut warnings = Vec::new();
    let mut iterations = 0;

    while iterations < opts.max_iter {
        if inf_norm(&g) <= opts.tol * n {
            converged = true;
            break;
        }
        if lambda == 0.0 && f < 1e-3 * n && obj.separates(&theta) {
            let norm = theta[1..].iter().map(|b| b * b).sum::<f64>().sqrt();
            warnings.push(format!(
                "perfect separation: likelihood has no finite maximum, weight norm diverging (|beta| = {norm:.3e}); use lambda > 0"
            ));
            break;
        }
        iterations += 1;
        let mut dir = lbfgs_direction(&g, &history);
        let mut slope = dot(&g, &dir);
        if slope.is_nan() || slope >= 0.0 {
            history.clear();
            dir = g.iter().map(|v| -v).collect();
            slope = dot(&g, &dir);
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = theta.iter().zip(&dir).map(|(t, d)| t + step * d).collect();
            let ft = obj.value(&trial);
            if ft.is_finite() && ft <= f + 1e-4 * step * slope {
                accepted = Some((trial, ft));
                break;
            }
            step *= 0.5;
        }
        let Some((next, f_next)) = accepted else {
            // No decrease available at machine precision.
            converged = inf_norm(&g) <= opts.tol.sqrt() * n;
            if !converged {
                warnings.push("line search stalled before the gradient tolerance was met".to_string());
            }
            break;
        };
        let (_, g_next) = obj.value_and_gradient(&next);
        let s: Vec<f64> = next.iter().zip(&theta).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = g_next.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &yv);
        if sy > 1e-12 * dot(&yv, &yv).sqrt() * dot(&s, &s).sqrt() {
            if history.len() == opts.memory {
                history.pop_front();
            }
            history.push_back((s, yv, 1.0 / sy));
        }
        theta = next;
        f = f_next.min(f);
        g = g_next;
        trace.push(f);
    }
    if iterations == opts.max_iter && !converged && warnings.is_empty() {
        warnings.push(format!("stopped after {} iterations without converging", opts.max_iter));
    }
    if theta.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("logistic fit produced non-finite coefficients"));
    }
    let mut coefs = Coefficients::from_standardized(ModelKind::Logistic, lambda, x, &obj.kept, theta[0], &theta[1..]);
    coefs.converged = converged;
    coefs.iterations = iterations;
    coefs.objective_trace = trace;
    coefs.warnings.extend(warnings);
    Ok(coefs)
}
