//! Linear predictors for congestion starting time and duration: OLS, LASSO by
//! coordinate descent, and nested cross-validation.

mod cv;
mod lasso;
mod ols;

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub(crate) use cv::select_rows;
pub use cv::{
    audit_folds, fixed_split_evaluate, kfold, nested_cv_evaluate, select_alpha, select_alpha_on,
    AlphaGrid, AlphaSelection, CvConfig, EvaluationMode, EvaluationReport, FoldFeatures,
    FoldReport, PredictionRow, PREDICTION_HEADER,
};
pub use lasso::{
    alpha_grid, alpha_max, fit_lasso, kkt_max_violation, lasso_path, soft_threshold, LassoParams,
};
pub use ols::{fit_ols, ols_inference, OlsSummary};

use crate::congestion::CongestionRecord;
use crate::error::{Error, Result};
use crate::features::{FeatureKind, FeatureMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Cst,
    Duration,
}

impl Target {
    pub fn of(&self, r: &CongestionRecord) -> Option<f64> {
        match self {
            Target::Cst => r.cst,
            Target::Duration => r.duration,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Target::Cst => "cst",
            Target::Duration => "duration",
        }
    }
}

/// Column centering and scaling used during fitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub means: Vec<f64>,
    /// Population standard deviations; zero marks a constant column.
    pub scales: Vec<f64>,
}

impl Standardization {
    pub fn of(x: &DMatrix<f64>) -> Self {
        let n = x.nrows() as f64;
        let mut means = Vec::with_capacity(x.ncols());
        let mut scales = Vec::with_capacity(x.ncols());
        for col in x.column_iter() {
            let m = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
            let sd = var.sqrt();
            means.push(m);
            scales.push(if sd > 1e-12 * m.abs().max(1.0) {
                sd
            } else {
                0.0
            });
        }
        Standardization { means, scales }
    }
}

/// Linear model in original feature units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub alpha: f64,
    pub standardization: Standardization,
    pub converged: bool,
    pub passes: usize,
    /// Penalized objective after each coordinate-descent pass.
    #[serde(skip)]
    pub objective_trace: Vec<f64>,
    pub warnings: Vec<String>,
}

impl LinearFit {
    pub fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        x.row_iter()
            .map(|row| {
                self.intercept
                    + row
                        .iter()
                        .zip(&self.coefficients)
                        .map(|(a, b)| a * b)
                        .sum::<f64>()
            })
            .collect()
    }

    pub fn n_selected(&self, threshold: f64) -> usize {
        self.coefficients
            .iter()
            .filter(|b| b.abs() > threshold)
            .count()
    }
}

/// A fitted CST or duration predictor with its feature names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedPredictor {
    pub target: Target,
    pub feature_kind: FeatureKind,
    pub names: Vec<String>,
    pub fit: LinearFit,
}

impl FittedPredictor {
    pub fn new(target: Target, features: &FeatureMatrix, fit: LinearFit) -> Self {
        FittedPredictor {
            target,
            feature_kind: features.kind,
            names: features.names.clone(),
            fit,
        }
    }

    pub fn predict(&self, features: &FeatureMatrix) -> Result<Vec<f64>> {
        if features.names != self.names {
            return Err(Error::Contract(
                "feature names differ from the fitted model".into(),
            ));
        }
        Ok(self.fit.predict(&features.values))
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn check_lengths(pred: &[f64], actual: &[f64]) -> Result<()> {
    if pred.len() != actual.len() {
        return Err(Error::LengthMismatch {
            expected: actual.len(),
            actual: pred.len(),
        });
    }
    if pred.is_empty() {
        return Err(Error::NoObservations(
            "metrics need at least one prediction".into(),
        ));
    }
    Ok(())
}

pub fn rmse(pred: &[f64], actual: &[f64]) -> Result<f64> {
    check_lengths(pred, actual)?;
    let mse = pred
        .iter()
        .zip(actual)
        .map(|(p, a)| (p - a) * (p - a))
        .sum::<f64>()
        / pred.len() as f64;
    Ok(mse.sqrt())
}

pub fn mae(pred: &[f64], actual: &[f64]) -> Result<f64> {
    check_lengths(pred, actual)?;
    Ok(pred
        .iter()
        .zip(actual)
        .map(|(p, a)| (p - a).abs())
        .sum::<f64>()
        / pred.len() as f64)
}
