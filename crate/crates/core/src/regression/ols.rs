use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::{LinearFit, Standardization};
use crate::error::{Error, Result};

fn check_shape(x: &DMatrix<f64>, y: &[f64], min_rows: usize) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::LengthMismatch {
            expected: x.nrows(),
            actual: y.len(),
        });
    }
    if y.len() < min_rows {
        return Err(Error::NoObservations(format!(
            "need at least {min_rows} rows, got {}",
            y.len()
        )));
    }
    Ok(())
}

fn centered(x: &DMatrix<f64>, means: &[f64]) -> DMatrix<f64> {
    let mut xc = x.clone();
    for (j, mut col) in xc.column_iter_mut().enumerate() {
        col.add_scalar_mut(-means[j]);
    }
    xc
}

/// Least squares with an unpenalized intercept. Rank-deficient designs get
/// the minimum-norm coefficient vector.
pub fn fit_ols(x: &DMatrix<f64>, y: &[f64]) -> Result<LinearFit> {
    check_shape(x, y, 2)?;
    let n = y.len();
    let standardization = Standardization::of(x);
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let xc = centered(x, &standardization.means);
    let yc = DVector::from_iterator(n, y.iter().map(|v| v - y_mean));
    let mut warnings = Vec::new();
    let beta = if x.ncols() == 0 {
        DVector::zeros(0)
    } else {
        let svd = xc.svd(true, true);
        let s_max = svd.singular_values.max();
        let eps = s_max * 1e-10 * n.max(x.ncols()) as f64;
        let rank = svd.singular_values.iter().filter(|&&s| s > eps).count();
        if rank < x.ncols() && s_max > 0.0 {
            warnings.push(format!(
                "design has rank {rank} < {} features; minimum-norm solution used",
                x.ncols()
            ));
        }
        if s_max == 0.0 {
            DVector::zeros(x.ncols())
        } else {
            svd.solve(&yc, eps)
                .map_err(|e| Error::FitFailure(e.to_string()))?
        }
    };
    let coefficients: Vec<f64> = beta.iter().copied().collect();
    let intercept = y_mean
        - coefficients
            .iter()
            .zip(&standardization.means)
            .map(|(b, m)| b * m)
            .sum::<f64>();
    Ok(LinearFit {
        coefficients,
        intercept,
        alpha: 0.0,
        standardization,
        converged: true,
        passes: 0,
        objective_trace: Vec::new(),
        warnings,
    })
}

/// Classical normal-theory inference for a full-rank OLS fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsSummary {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub t_values: Vec<f64>,
    pub p_values: Vec<f64>,
    pub residual_df: usize,
    pub sigma2: f64,
    pub r_squared: f64,
}

pub fn ols_inference(x: &DMatrix<f64>, y: &[f64]) -> Result<OlsSummary> {
    let p = x.ncols();
    check_shape(x, y, p + 2)?;
    let n = y.len();
    let fit = fit_ols(x, y)?;
    if !fit.warnings.is_empty() {
        return Err(Error::Infeasible(
            "OLS inference needs a full-rank design".into(),
        ));
    }
    let pred = fit.predict(x);
    let rss: f64 = pred.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let tss: f64 = y.iter().map(|v| (v - y_mean) * (v - y_mean)).sum();
    let df = n - p - 1;
    let sigma2 = rss / df as f64;
    let xc = centered(x, &fit.standardization.means);
    let gram_inv = (xc.transpose() * &xc)
        .try_inverse()
        .ok_or_else(|| Error::Infeasible("singular Gram matrix".into()))?;
    let t_dist =
        StudentsT::new(0.0, 1.0, df as f64).map_err(|e| Error::FitFailure(e.to_string()))?;
    let std_errors: Vec<f64> = (0..p).map(|j| (sigma2 * gram_inv[(j, j)]).sqrt()).collect();
    let t_values: Vec<f64> = fit
        .coefficients
        .iter()
        .zip(&std_errors)
        .map(|(b, se)| b / se)
        .collect();
    let p_values = t_values
        .iter()
        .map(|t| 2.0 * (1.0 - t_dist.cdf(t.abs())))
        .collect();
    Ok(OlsSummary {
        intercept: fit.intercept,
        coefficients: fit.coefficients,
        std_errors,
        t_values,
        p_values,
        residual_df: df,
        sigma2,
        r_squared: if tss > 0.0 { 1.0 - rss / tss } else { 1.0 },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let x = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]);
        let fit = fit_ols(&x, &[2.0, 4.0, 6.0]).unwrap();
        assert!((fit.coefficients[0] - 2.0).abs() < 1e-12);
        assert!(fit.intercept.abs() < 1e-12);
    }

    #[test]
    fn constant_target() {
        let x = DMatrix::from_column_slice(4, 2, &[1.0, 2.0, 3.0, 5.0, 0.0, 1.0, 0.0, 1.0]);
        let fit = fit_ols(&x, &[7.0; 4]).unwrap();
        assert!(fit.coefficients.iter().all(|b| b.abs() < 1e-12));
        assert!((fit.intercept - 7.0).abs() < 1e-12);
    }

    #[test]
    fn duplicated_column_splits_evenly() {
        let col = [0.3, 1.2, 2.0, 3.7, 4.1];
        let y = [1.0, 2.9, 4.2, 8.1, 8.0];
        let single = fit_ols(&DMatrix::from_column_slice(5, 1, &col), &y).unwrap();
        let both: Vec<f64> = col.iter().chain(col.iter()).copied().collect();
        let x2 = DMatrix::from_column_slice(5, 2, &both);
        let dup = fit_ols(&x2, &y).unwrap();
        assert_eq!(dup.warnings.len(), 1);
        assert!((dup.coefficients[0] - dup.coefficients[1]).abs() < 1e-10);
        let a = single.predict(&DMatrix::from_column_slice(5, 1, &col));
        let b = dup.predict(&x2);
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-8);
        }
    }

    #[test]
    fn too_few_rows() {
        let x = DMatrix::from_column_slice(1, 1, &[1.0]);
        assert!(fit_ols(&x, &[1.0]).is_err());
        assert!(fit_ols(&x, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn inference_matches_hand_computation() {
        // Four points near y = 1 + 2x, checked against the closed-form simple regression.
        let xs = [0.0, 1.0, 2.0, 3.0];
        let y = [1.1, 2.8, 5.1, 7.0];
        let s = ols_inference(&DMatrix::from_column_slice(4, 1, &xs), &y).unwrap();
        // Slope = Sxy / Sxx with x-bar 1.5, y-bar 4.0.
        let sxy: f64 = xs.iter().zip(&y).map(|(x, y)| (x - 1.5) * (y - 4.0)).sum();
        let slope = sxy / 5.0;
        assert!((s.coefficients[0] - slope).abs() < 1e-12);
        let rss: f64 = xs
            .iter()
            .zip(&y)
            .map(|(x, y)| (y - (4.0 - slope * 1.5) - slope * x).powi(2))
            .sum();
        let se = (rss / 2.0 / 5.0).sqrt();
        assert!((s.std_errors[0] - se).abs() < 1e-12);
        assert_eq!(s.residual_df, 2);
        assert!(s.p_values[0] > 0.0 && s.p_values[0] < 0.01);
    }
}
