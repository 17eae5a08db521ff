use nalgebra::{DMatrix, DVector};

use super::linear::{check_lambda, check_targets, mean};
use super::{Coefficients, DesignMatrix, ModelKind};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LassoOptions {
    /// Stop once the largest coefficient change in a sweep falls below this.
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for LassoOptions {
    fn default() -> Self {
        LassoOptions {
            tol: 1e-6,
            max_sweeps: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CdOutcome {
    pub beta: Vec<f64>,
    /// Objective at the starting point, then after every sweep.
    pub objective_trace: Vec<f64>,
    pub sweeps: usize,
    pub converged: bool,
}

pub fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

/// Cyclic coordinate descent for `‖y − Zβ‖² + λ‖β‖₁` with no intercept.
///
/// Each coordinate step is the exact minimizer
/// `β_j = S(z_jᵀr_{-j}, λ/2) / ‖z_j‖²`. All-zero columns keep a zero weight.
pub fn coordinate_descent(
    z: &DMatrix<f64>,
    y: &[f64],
    lambda: f64,
    opts: &LassoOptions,
    warm_start: Option<&[f64]>,
) -> CdOutcome {
    let d = z.ncols();
    let mut beta = match warm_start {
        Some(w) if w.len() == d => DVector::from_column_slice(w),
        _ => DVector::zeros(d),
    };
    let col_sq: Vec<f64> = z.column_iter().map(|c| c.norm_squared()).collect();
    let mut r = DVector::from_column_slice(y) - z * &beta;
    let objective = |r: &DVector<f64>, beta: &DVector<f64>| r.norm_squared() + lambda * beta.lp_norm(1);
    let mut trace = vec![objective(&r, &beta)];
    let mut converged = d == 0;
    let mut sweeps = 0;
    while !converged && sweeps < opts.max_sweeps {
        sweeps += 1;
        let mut max_change = 0.0f64;
        for j in 0..d {
            if col_sq[j] == 0.0 {
                continue;
            }
            let col = z.column(j);
            let old = beta[j];
            let rho = col.dot(&r) + col_sq[j] * old;
            let new = soft_threshold(rho, lambda / 2.0) / col_sq[j];
            let delta = new - old;
            if delta != 0.0 {
                r.axpy(-delta, &col, 1.0);
                beta[j] = new;
                max_change = max_change.max(delta.abs());
            }
        }
        trace.push(objective(&r, &beta));
        converged = max_change < opts.tol;
    }
    CdOutcome {
        beta: beta.as_slice().to_vec(),
        objective_trace: trace,
        sweeps,
        converged,
    }
}

/// Smallest λ for which the standardized LASSO solution is all zeros.
pub fn lasso_lambda_max(x: &DesignMatrix, y: &[f64]) -> Result<f64> {
    check_targets(x, y)?;
    let std = x.standardized();
    let y_mean = mean(y);
    let yc = DVector::from_iterator(y.len(), y.iter().map(|v| v - y_mean));
    Ok(2.0 * std.z.tr_mul(&yc).amax())
}

pub fn fit_lasso(x: &DesignMatrix, y: &[f64], lambda: f64, opts: &LassoOptions) -> Result<Coefficients> {
    check_targets(x, y)?;
    check_lambda(lambda)?;
    let std = x.standardized();
    let y_mean = mean(y);
    let yc: Vec<f64> = y.iter().map(|v| v - y_mean).collect();
    let out = coordinate_descent(&std.z, &yc, lambda, opts, None);
    if out.beta.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("lasso produced non-finite coefficients"));
    }
    let mut coefs = Coefficients::from_standardized(ModelKind::Lasso, lambda, x, &std.kept, y_mean, &out.beta);
    coefs.converged = out.converged;
    coefs.iterations = out.sweeps;
    coefs.objective_trace = out.objective_trace;
    if !out.converged {
        coefs.warnings.push(format!(
            "coordinate descent stopped after {} sweeps without converging",
            out.sweeps
        ));
    }
    Ok(coefs)
}

/// LASSO fits for several λ, solved from the largest λ down with warm
/// starts. Results come back in the order of `lambdas`.
pub fn fit_lasso_path(x: &DesignMatrix, y: &[f64], lambdas: &[f64], opts: &LassoOptions) -> Result<Vec<Coefficients>> {
    check_targets(x, y)?;
    for &l in lambdas {
        check_lambda(l)?;
    }
    let std = x.standardized();
    let y_mean = mean(y);
    let yc: Vec<f64> = y.iter().map(|v| v - y_mean).collect();
    let mut order: Vec<usize> = (0..lambdas.len()).collect();
    order.sort_by(|&a, &b| lambdas[b].total_cmp(&lambdas[a]));
    let mut out: Vec<Option<Coefficients>> = vec![None; lambdas.len()];
    let mut warm: Option<Vec<f64>> = None;
    for i in order {
        let lambda = lambdas[i];
        let cd = coordinate_descent(&std.z, &yc, lambda, opts, warm.as_deref());
        if cd.beta.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric("lasso produced non-finite coefficients"));
        }
        let mut c = Coefficients::from_standardized(ModelKind::Lasso, lambda, x, &std.kept, y_mean, &cd.beta);
        c.converged = cd.converged;
        c.iterations = cd.sweeps;
        if !cd.converged {
            c.warnings.push(format!(
                "coordinate descent stopped after {} sweeps without converging",
                cd.sweeps
            ));
        }
        c.objective_trace = cd.objective_trace;
        warm = Some(cd.beta);
        out[i] = Some(c);
    }
    Ok(out.into_iter().map(|c| c.expect("every lambda solved")).collect())
}
