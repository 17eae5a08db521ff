use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::{Coefficients, DesignMatrix, ModelKind};
use crate::error::{Error, Result};

pub(super) fn check_targets(x: &DesignMatrix, y: &[f64]) -> Result<()> {
    if y.len() != x.rows() {
        return Err(Error::DimensionMismatch(format!(
            "{} targets for {} rows",
            y.len(),
            x.rows()
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::validation("targets contain NaN or infinite values"));
    }
    Ok(())
}

pub(super) fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::validation(format!(
            "lambda must be finite and >= 0, got {lambda}"
        )));
    }
    Ok(())
}

pub(super) fn mean(y: &[f64]) -> f64 {
    y.iter().sum::<f64>() / y.len() as f64
}

/// Sum of squared residuals plus `penalty`, in standardized coordinates.
pub(super) fn sse(z: &DMatrix<f64>, yc: &DVector<f64>, beta: &DVector<f64>) -> f64 {
    (yc - z * beta).norm_squared()
}

/// Minimum-norm solve of `g β = b` for symmetric PSD `g`. Returns the solution
/// and the numerical rank.
fn min_norm_solve(g: &DMatrix<f64>, b: &DVector<f64>) -> (DVector<f64>, usize) {
    let eig = SymmetricEigen::new(g.clone());
    let top = eig.eigenvalues.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let tol = top * g.nrows() as f64 * f64::EPSILON * 16.0;
    let vtb = eig.eigenvectors.tr_mul(b);
    let mut scaled = DVector::zeros(vtb.len());
    let mut rank = 0;
    for (i, &ev) in eig.eigenvalues.iter().enumerate() {
        if ev > tol {
            scaled[i] = vtb[i] / ev;
            rank += 1;
        }
    }
    (&eig.eigenvectors * scaled, rank)
}

fn solve(x: &DesignMatrix, y: &[f64], lambda: f64, kind: ModelKind) -> Result<Coefficients> {
    check_targets(x, y)?;
    check_lambda(lambda)?;
    let std = x.standardized();
    let y_mean = mean(y);
    let yc = DVector::from_iterator(y.len(), y.iter().map(|v| v - y_mean));
    let d = std.kept.len();
    let mut warnings = Vec::new();
    let beta = if d == 0 {
        DVector::zeros(0)
    } else {
        let mut g = std.z.tr_mul(&std.z);
        let b = std.z.tr_mul(&yc);
        for i in 0..d {
            g[(i, i)] += lambda;
        }
        let cholesky = if lambda > 0.0 { g.clone().cholesky() } else { None };
        match cholesky {
            Some(c) => c.solve(&b),
            None => {
                let (beta, rank) = min_norm_solve(&g, &b);
                if rank < d {
                    warnings.push(format!(
                        "rank-deficient design (rank {rank} of {d}); minimum-norm solution"
                    ));
                }
                beta
            }
        }
    };
    if beta.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric(format!("{kind} solve produced non-finite coefficients")));
    }
    let objective = sse(&std.z, &yc, &beta) + lambda * beta.norm_squared();
    let mut coefs = Coefficients::from_standardized(kind, lambda, x, &std.kept, y_mean, beta.as_slice());
    coefs.warnings.extend(warnings);
    coefs.iterations = 1;
    coefs.objective_trace = vec![objective];
    Ok(coefs)
}

/// Least squares through the normal equations, solved by symmetric
/// eigendecomposition. Rank-deficient designs get the minimum-norm solution
/// and a warning.
pub fn fit_ols(x: &DesignMatrix, y: &[f64]) -> Result<Coefficients> {
    solve(x, y, 0.0, ModelKind::Ols)
}

/// Ridge regression: `(ZᵀZ + λI) β = Zᵀ(y − ȳ)` on standardized features.
pub fn fit_ridge(x: &DesignMatrix, y: &[f64], lambda: f64) -> Result<Coefficients> {
    solve(x, y, lambda, ModelKind::Ridge)
}

/// Ridge fits for several λ sharing one eigendecomposition of `ZᵀZ`.
/// Results come back in the order of `lambdas`.
pub fn fit_ridge_path(x: &DesignMatrix, y: &[f64], lambdas: &[f64]) -> Result<Vec<Coefficients>> {
    check_targets(x, y)?;
    for &l in lambdas {
        check_lambda(l)?;
    }
    let std = x.standardized();
    let y_mean = mean(y);
    let yc = DVector::from_iterator(y.len(), y.iter().map(|v| v - y_mean));
    let d = std.kept.len();
    let g = std.z.tr_mul(&std.z);
    let eig = SymmetricEigen::new(g);
    let top = eig.eigenvalues.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let tol = top * d.max(1) as f64 * f64::EPSILON * 16.0;
    let vtb = eig.eigenvectors.tr_mul(&std.z.tr_mul(&yc));
    lambdas
        .iter()
        .map(|&lambda| {
            let scaled = DVector::from_iterator(
                d,
                eig.eigenvalues.iter().zip(vtb.iter()).map(
                    |(&e, &v)| {
                        if e + lambda > tol {
                            v / (e + lambda)
                        } else {
                            0.0
                        }
                    },
                ),
            );
            let beta = &eig.eigenvectors * scaled;
            if beta.iter().any(|v| !v.is_finite()) {
                return Err(Error::numeric("ridge path produced non-finite coefficients"));
            }
            let objective = sse(&std.z, &yc, &beta) + lambda * beta.norm_squared();
            let mut c =
                Coefficients::from_standardized(ModelKind::Ridge, lambda, x, &std.kept, y_mean, beta.as_slice());
            c.iterations = 1;
            c.objective_trace = vec![objective];
            Ok(c)
        })
        .collect()
}
