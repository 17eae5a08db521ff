//! Linear back-ends on fixed-dimension embeddings: ordinary least squares,
//! ridge, LASSO by coordinate descent, and binary logistic regression.
//!
//! All penalized fits run on standardized features with an unpenalized
//! intercept. Reported weights are mapped back to the original feature units,
//! so `prediction = intercept + weights · x` on raw inputs.

mod design;
mod lasso;
mod linear;
mod logistic;

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use design::{DesignMatrix, Standardized};
pub use lasso::{
    coordinate_descent, fit_lasso, fit_lasso_path, lasso_lambda_max, soft_threshold, CdOutcome, LassoOptions,
};
pub use linear::{fit_ols, fit_ridge, fit_ridge_path};
pub use logistic::{fit_logistic, sigmoid, LogisticObjective, LogisticOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Ols,
    Ridge,
    Lasso,
    Logistic,
}

impl ModelKind {
    pub fn token(self) -> &'static str {
        match self {
            ModelKind::Ols => "ols",
            ModelKind::Ridge => "ridge",
            ModelKind::Lasso => "lasso",
            ModelKind::Logistic => "logistic",
        }
    }

    pub fn is_regressor(self) -> bool {
        !matches!(self, ModelKind::Logistic)
    }

    pub fn is_penalized(self) -> bool {
        !matches!(self, ModelKind::Ols)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ols" | "linear" => Ok(ModelKind::Ols),
            "ridge" => Ok(ModelKind::Ridge),
            "lasso" => Ok(ModelKind::Lasso),
            "logistic" => Ok(ModelKind::Logistic),
            other => Err(Error::validation(format!("unknown model kind \"{other}\""))),
        }
    }
}

/// A fitted linear model in original feature units.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients {
    pub model_kind: ModelKind,
    pub lambda: f64,
    pub intercept: f64,
    pub weights: Vec<f64>,
    pub column_means: Vec<f64>,
    /// Zero for columns excluded as constant.
    pub column_stds: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub objective_trace: Vec<f64>,
    pub warnings: Vec<String>,
}

impl Coefficients {
    /// Maps standardized-space coefficients back to feature units.
    pub(crate) fn from_standardized(
        model_kind: ModelKind,
        lambda: f64,
        x: &DesignMatrix,
        kept: &[usize],
        intercept_std: f64,
        beta_std: &[f64],
    ) -> Self {
        let d = x.cols();
        let mut weights = vec![0.0; d];
        let mut column_stds = vec![0.0; d];
        for (&j, &b) in kept.iter().zip(beta_std) {
            weights[j] = b / x.column_stds()[j];
            column_stds[j] = x.column_stds()[j];
        }
        let intercept = intercept_std - weights.iter().zip(x.column_means()).map(|(w, m)| w * m).sum::<f64>();
        let mut warnings = Vec::new();
        let dropped = d - kept.len();
        if dropped > 0 {
            warnings.push(format!("{dropped} constant column(s) excluded with zero weight"));
        }
        Coefficients {
            model_kind,
            lambda,
            intercept,
            weights,
            column_means: x.column_means().to_vec(),
            column_stds,
            converged: true,
            iterations: 0,
            objective_trace: Vec::new(),
            warnings,
        }
    }

    pub fn dimension(&self) -> usize {
        self.weights.len()
    }

    /// Weights on the standardized scale (`weight * std`).
    pub fn standardized_weights(&self) -> Vec<f64> {
        self.weights.iter().zip(&self.column_stds).map(|(w, s)| w * s).collect()
    }

    fn check_dimension(&self, cols: usize) -> Result<()> {
        if cols != self.dimension() {
            return Err(Error::DimensionMismatch(format!(
                "model expects {} features, got {cols}",
                self.dimension()
            )));
        }
        Ok(())
    }

    /// Raw affine outputs: no rounding, no clipping. For logistic models these
    /// are log-odds.
    pub fn predict(&self, x: &DesignMatrix) -> Result<Vec<f64>> {
        self.check_dimension(x.cols())?;
        let w = DVector::from_column_slice(&self.weights);
        let out = x.values() * w;
        Ok(out.iter().map(|v| v + self.intercept).collect())
    }

    pub fn predict_row(&self, row: &[f64]) -> Result<f64> {
        self.check_dimension(row.len())?;
        Ok(self.intercept + self.weights.iter().zip(row).map(|(w, v)| w * v).sum::<f64>())
    }

    pub fn predict_proba(&self, x: &DesignMatrix) -> Result<Vec<f64>> {
        Ok(self.predict(x)?.into_iter().map(sigmoid).collect())
    }

    /// Positive (`true`) when the logistic probability reaches `threshold`.
    pub fn classify(&self, x: &DesignMatrix, threshold: f64) -> Result<Vec<bool>> {
        Ok(self.predict_proba(x)?.into_iter().map(|p| p >= threshold).collect())
    }

    pub fn to_model_file(&self, seed_context: SeedContext) -> ModelFile {
        ModelFile {
            model_kind: self.model_kind,
            lambda: self.lambda,
            intercept: self.intercept,
            weights: self.weights.clone(),
            column_means: self.column_means.clone(),
            column_stds: self.column_stds.clone(),
            converged: self.converged,
            seed_context,
            warnings: self.warnings.clone(),
        }
    }
}

pub fn predict(coefs: &Coefficients, x: &DesignMatrix) -> Result<Vec<f64>> {
    coefs.predict(x)
}

pub fn classify(coefs: &Coefficients, x: &DesignMatrix, threshold: f64) -> Result<Vec<bool>> {
    coefs.classify(x, threshold)
}

/// Where the randomness behind a fitted model came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedContext {
    pub seed: Option<u64>,
    pub stream: String,
}

/// On-disk model: JSON with weights in original feature units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub model_kind: ModelKind,
    pub lambda: f64,
    pub intercept: f64,
    pub weights: Vec<f64>,
    pub column_means: Vec<f64>,
    pub column_stds: Vec<f64>,
    pub converged: bool,
    pub seed_context: SeedContext,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl ModelFile {
    pub fn into_coefficients(self) -> Result<Coefficients> {
        let d = self.weights.len();
        if self.column_means.len() != d || self.column_stds.len() != d {
            return Err(Error::DimensionMismatch(format!(
                "model file has {d} weights but {} means and {} stds",
                self.column_means.len(),
                self.column_stds.len()
            )));
        }
        if !self.intercept.is_finite() || self.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::validation("model file contains non-finite weights"));
        }
        Ok(Coefficients {
            model_kind: self.model_kind,
            lambda: self.lambda,
            intercept: self.intercept,
            weights: self.weights,
            column_means: self.column_means,
            column_stds: self.column_stds,
            converged: self.converged,
            iterations: 0,
            objective_trace: Vec::new(),
            warnings: self.warnings,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant_model(c: f64, d: usize) -> Coefficients {
        Coefficients {
            model_kind: ModelKind::Ridge,
            lambda: 1.0,
            intercept: c,
            weights: vec![0.0; d],
            column_means: vec![0.0; d],
            column_stds: vec![1.0; d],
            converged: true,
            iterations: 0,
            objective_trace: vec![],
            warnings: vec![],
        }
    }

    #[test]
    fn zero_weights_predict_the_intercept() {
        let x = DesignMatrix::from_rows(&[vec![1.0, 2.0], vec![-3.0, 8.0]]).unwrap();
        assert_eq!(constant_model(41.5, 2).predict(&x).unwrap(), vec![41.5, 41.5]);
    }

    #[test]
    fn dimension_mismatch_is_fatal() {
        let x = DesignMatrix::from_rows(&[vec![1.0, 2.0, 3.0]]).unwrap();
        assert!(matches!(
            constant_model(0.0, 2).predict(&x),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn boundary_point_has_probability_one_half() {
        let mut m = constant_model(-3.0, 1);
        m.model_kind = ModelKind::Logistic;
        m.weights = vec![1.5];
        let boundary = -m.intercept / m.weights[0];
        let x = DesignMatrix::from_rows(&[vec![boundary], vec![boundary + 1.0]]).unwrap();
        let p = m.predict_proba(&x).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-15);
        assert_eq!(m.classify(&x, 0.5).unwrap(), vec![true, true]);
        assert!(p[1] > 0.5);
    }

    #[test]
    fn model_file_round_trip() {
        let m = constant_model(2.0, 3);
        let file = m.to_model_file(SeedContext {
            seed: Some(7),
            stream: "final-fit".into(),
        });
        let json = serde_json::to_string(&file).unwrap();
        assert!(json.contains("\"model_kind\":\"ridge\""));
        let back: ModelFile = serde_json::from_str(&json).unwrap();
        assert_eq!(back.into_coefficients().unwrap(), m);
    }
}
