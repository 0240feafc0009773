use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{LinearFit, Standardization};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LassoParams {
    /// Stop when the largest standardized coefficient change in a full pass is below this.
    pub tol: f64,
    /// Upper bound on coordinate-descent passes, counting active-set passes.
    pub max_passes: usize,
}

impl Default for LassoParams {
    fn default() -> Self {
        LassoParams {
            tol: 1e-8,
            max_passes: 100_000,
        }
    }
}

pub fn soft_threshold(z: f64, gamma: f64) -> f64 {
    debug_assert!(gamma >= 0.0);
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

/// Standardized design stored column-major, with the centered target.
struct Standardized {
    n: usize,
    columns: Vec<Vec<f64>>,
    scaling: Standardization,
    y_mean: f64,
    y_centered: Vec<f64>,
}

impl Standardized {
    fn new(x: &DMatrix<f64>, y: &[f64]) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::LengthMismatch {
                expected: x.nrows(),
                actual: y.len(),
            });
        }
        if y.is_empty() {
            return Err(Error::NoObservations("LASSO needs at least one row".into()));
        }
        let n = y.len();
        let scaling = Standardization::of(x);
        let columns = x
            .column_iter()
            .enumerate()
            .map(|(j, col)| {
                let (m, s) = (scaling.means[j], scaling.scales[j]);
                if s == 0.0 {
                    vec![0.0; n]
                } else {
                    col.iter().map(|v| (v - m) / s).collect()
                }
            })
            .collect();
        let y_mean = y.iter().sum::<f64>() / n as f64;
        let y_centered = y.iter().map(|v| v - y_mean).collect();
        Ok(Standardized {
            n,
            columns,
            scaling,
            y_mean,
            y_centered,
        })
    }

    fn gradient(&self, j: usize, residual: &[f64]) -> f64 {
        dot(&self.columns[j], residual) / self.n as f64
    }

    fn residual(&self, beta: &[f64]) -> Vec<f64> {
        let mut r = self.y_centered.clone();
        for (col, &b) in self.columns.iter().zip(beta) {
            if b != 0.0 {
                axpy(-b, col, &mut r);
            }
        }
        r
    }

    fn objective(&self, residual: &[f64], beta: &[f64], alpha: f64) -> f64 {
        dot(residual, residual) / (2.0 * self.n as f64)
            + alpha * beta.iter().map(|b| b.abs()).sum::<f64>()
    }

    fn to_fit(
        &self,
        beta: &[f64],
        alpha: f64,
        converged: bool,
        passes: usize,
        trace: Vec<f64>,
    ) -> LinearFit {
        let coefficients: Vec<f64> = beta
            .iter()
            .zip(&self.scaling.scales)
            .map(|(b, s)| if *s == 0.0 { 0.0 } else { b / s })
            .collect();
        let intercept = self.y_mean
            - coefficients
                .iter()
                .zip(&self.scaling.means)
                .map(|(b, m)| b * m)
                .sum::<f64>();
        let mut warnings = Vec::new();
        if !converged {
            warnings.push(format!(
                "coordinate descent did not converge in {passes} passes at alpha {alpha:e}"
            ));
        }
        LinearFit {
            coefficients,
            intercept,
            alpha,
            standardization: self.scaling.clone(),
            converged,
            passes,
            objective_trace: trace,
            warnings,
        }
    }

    /// Cyclic coordinate descent from `beta`, alternating full sweeps with
    /// sweeps restricted to the current nonzero set.
    fn solve(&self, beta: &mut [f64], alpha: f64, params: &LassoParams) -> LinearFit {
        let p = beta.len();
        let usable: Vec<usize> = (0..p).filter(|&j| self.scaling.scales[j] > 0.0).collect();
        let mut residual = self.residual(beta);
        let mut trace = Vec::new();
        let mut passes = 0;
        let mut converged = false;
        'outer: while passes < params.max_passes {
            let change = self.sweep(&usable, beta, &mut residual, alpha);
            passes += 1;
            trace.push(self.objective(&residual, beta, alpha));
            if change < params.tol {
                converged = true;
                break;
            }
            let active: Vec<usize> = usable.iter().copied().filter(|&j| beta[j] != 0.0).collect();
            loop {
                if passes >= params.max_passes {
                    break 'outer;
                }
                let change = self.sweep(&active, beta, &mut residual, alpha);
                passes += 1;
                trace.push(self.objective(&residual, beta, alpha));
                if change < params.tol {
                    break;
                }
            }
        }
        self.to_fit(beta, alpha, converged, passes, trace)
    }

    fn sweep(&self, coords: &[usize], beta: &mut [f64], residual: &mut [f64], alpha: f64) -> f64 {
        let mut max_change = 0.0f64;
        for &j in coords {
            let old = beta[j];
            let updated = soft_threshold(self.gradient(j, residual) + old, alpha);
            if updated != old {
                axpy(old - updated, &self.columns[j], residual);
                beta[j] = updated;
                max_change = max_change.max((updated - old).abs());
            }
        }
        max_change
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::Config(format!(
            "alpha must be finite and non-negative, got {alpha}"
        )));
    }
    Ok(())
}

/// LASSO with objective `(1/2n)||y - b0 - Xb||^2 + alpha ||b||_1` on
/// standardized columns. Coefficients are returned in original units.
pub fn fit_lasso(
    x: &DMatrix<f64>,
    y: &[f64],
    alpha: f64,
    params: &LassoParams,
) -> Result<LinearFit> {
    check_alpha(alpha)?;
    let data = Standardized::new(x, y)?;
    let mut beta = vec![0.0; x.ncols()];
    Ok(data.solve(&mut beta, alpha, params))
}

/// Fits along `alphas` in the given order, warm-starting each fit from the previous one.
pub fn lasso_path(
    x: &DMatrix<f64>,
    y: &[f64],
    alphas: &[f64],
    params: &LassoParams,
) -> Result<Vec<LinearFit>> {
    for &a in alphas {
        check_alpha(a)?;
    }
    let data = Standardized::new(x, y)?;
    let mut beta = vec![0.0; x.ncols()];
    Ok(alphas
        .iter()
        .map(|&a| data.solve(&mut beta, a, params))
        .collect())
}

/// Smallest alpha giving the all-zero model.
pub fn alpha_max(x: &DMatrix<f64>, y: &[f64]) -> Result<f64> {
    let data = Standardized::new(x, y)?;
    Ok((0..x.ncols())
        .map(|j| data.gradient(j, &data.y_centered).abs())
        .fold(0.0, f64::max))
}

/// `count` log-spaced values from alpha_max down to alpha_max times `ratio`.
pub fn alpha_grid(x: &DMatrix<f64>, y: &[f64], count: usize, ratio: f64) -> Result<Vec<f64>> {
    if count == 0 || !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::Config(format!(
            "invalid alpha grid: count {count}, ratio {ratio}"
        )));
    }
    let top = alpha_max(x, y)?;
    if top == 0.0 {
        return Ok(vec![0.0]);
    }
    if count == 1 {
        return Ok(vec![top]);
    }
    let step = ratio.ln() / (count - 1) as f64;
    Ok((0..count).map(|i| top * (step * i as f64).exp()).collect())
}

/// Largest violation of the LASSO optimality conditions, in standardized units.
pub fn kkt_max_violation(x: &DMatrix<f64>, y: &[f64], fit: &LinearFit) -> Result<f64> {
    let data = Standardized::new(x, y)?;
    let beta: Vec<f64> = fit
        .coefficients
        .iter()
        .zip(&data.scaling.scales)
        .map(|(b, s)| b * s)
        .collect();
    let residual = data.residual(&beta);
    let mut worst = 0.0f64;
    for (j, &b) in beta.iter().enumerate() {
        if data.scaling.scales[j] == 0.0 {
            continue;
        }
        let g = data.gradient(j, &residual);
        let v = if b != 0.0 {
            (g - fit.alpha * b.signum()).abs()
        } else {
            (g.abs() - fit.alpha).max(0.0)
        };
        worst = worst.max(v);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regression::fit_ols;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_problem(seed: u64, n: usize, p: usize) -> (DMatrix<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = (0..n)
            .map(|i| {
                1.0 + 2.0 * x[(i, 0)] - x[(i, p - 1)] + 0.5 * rng.sample::<f64, _>(StandardNormal)
            })
            .collect();
        (x, y)
    }

    #[test]
    fn soft_threshold_examples() {
        assert_eq!(soft_threshold(3.0, 1.0), 2.0);
        assert_eq!(soft_threshold(-0.5, 1.0), 0.0);
        assert_eq!(soft_threshold(-3.0, 1.0), -2.0);
    }

    #[test]
    fn zero_alpha_matches_ols() {
        let (x, y) = random_problem(5, 50, 10);
        let params = LassoParams {
            tol: 1e-12,
            ..Default::default()
        };
        let lasso = fit_lasso(&x, &y, 0.0, &params).unwrap();
        let ols = fit_ols(&x, &y).unwrap();
        assert!(lasso.converged);
        for (a, b) in lasso.predict(&x).iter().zip(ols.predict(&x)) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn alpha_max_gives_null_model() {
        let (x, y) = random_problem(6, 30, 4);
        let top = alpha_max(&x, &y).unwrap();
        for a in [top, top * 2.0] {
            let fit = fit_lasso(&x, &y, a, &LassoParams::default()).unwrap();
            assert!(fit.coefficients.iter().all(|&b| b == 0.0));
            assert_eq!(fit.intercept, y.iter().sum::<f64>() / y.len() as f64);
        }
        let below = fit_lasso(&x, &y, top * 0.99, &LassoParams::default()).unwrap();
        assert!(below.n_selected(0.0) > 0);
    }

    #[test]
    fn one_feature_closed_form() {
        // With one standardized column z, the solution is S(z'y/n, alpha)
        // rescaled by the column's standard deviation.
        let xs = [1.0, 2.0, 4.0, 7.0, 9.0];
        let y = [2.0, 2.5, 5.0, 8.0, 9.5];
        let n = 5.0;
        let m = xs.iter().sum::<f64>() / n;
        let sd = (xs.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n).sqrt();
        let ym = y.iter().sum::<f64>() / n;
        let zy = xs
            .iter()
            .zip(&y)
            .map(|(x, y)| (x - m) / sd * (y - ym))
            .sum::<f64>()
            / n;
        let alpha = 0.4 * zy;
        let expected = soft_threshold(zy, alpha) / sd;
        let fit = fit_lasso(
            &DMatrix::from_column_slice(5, 1, &xs),
            &y,
            alpha,
            &LassoParams::default(),
        )
        .unwrap();
        assert!((fit.coefficients[0] - expected).abs() < 1e-12);
        assert!((fit.intercept - (ym - expected * m)).abs() < 1e-12);
    }

    #[test]
    fn constant_column_is_skipped() {
        let (mut x, y) = random_problem(8, 20, 3);
        x.column_mut(1).fill(4.0);
        let fit = fit_lasso(&x, &y, 0.01, &LassoParams::default()).unwrap();
        assert_eq!(fit.coefficients[1], 0.0);
        assert!(kkt_max_violation(&x, &y, &fit).unwrap() < 1e-7);
    }

    #[test]
    fn grid_is_log_spaced_from_alpha_max() {
        let (x, y) = random_problem(9, 20, 3);
        let grid = alpha_grid(&x, &y, 50, 1e-4).unwrap();
        assert_eq!(grid.len(), 50);
        assert!((grid[0] - alpha_max(&x, &y).unwrap()).abs() < 1e-15);
        assert!((grid[49] / grid[0] - 1e-4).abs() < 1e-12);
        assert!(grid.windows(2).all(|w| w[1] < w[0]));
        assert!(alpha_grid(&x, &y, 0, 1e-4).is_err());
    }

    #[test]
    fn non_convergence_is_flagged() {
        let (x, y) = random_problem(10, 30, 8);
        let fit = fit_lasso(
            &x,
            &y,
            1e-4,
            &LassoParams {
                tol: 1e-14,
                max_passes: 2,
            },
        )
        .unwrap();
        assert!(!fit.converged);
        assert_eq!(fit.passes, 2);
        assert_eq!(fit.warnings.len(), 1);
    }

    #[test]
    fn rejects_negative_alpha() {
        let (x, y) = random_problem(11, 10, 2);
        assert!(matches!(
            fit_lasso(&x, &y, -1.0, &LassoParams::default()),
            Err(Error::Config(_))
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn path_fits_satisfy_kkt_and_descend(seed in 0u64..10_000, n in 15usize..60, p in 2usize..25) {
            let (x, y) = random_problem(seed, n, p);
            let params = LassoParams::default();
            let grid = alpha_grid(&x, &y, 20, 1e-3).unwrap();
            let path = lasso_path(&x, &y, &grid, &params).unwrap();
            for fit in &path {
                prop_assert!(fit.converged);
                prop_assert!(kkt_max_violation(&x, &y, fit).unwrap() <= 10.0 * params.tol);
                for w in fit.objective_trace.windows(2) {
                    prop_assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-15);
                }
            }
        }

        #[test]
        fn active_set_shrinks_with_alpha_on_near_orthogonal_designs(seed in 0u64..10_000) {
            // Monotonicity can fail under strong correlation; random designs with
            // n much larger than p are close enough to orthogonal for it to hold.
            let (x, y) = random_problem(seed, 200, 6);
            let grid = alpha_grid(&x, &y, 25, 1e-3).unwrap();
            let path = lasso_path(&x, &y, &grid, &LassoParams::default()).unwrap();
            for w in path.windows(2) {
                prop_assert!(w[0].n_selected(0.0) <= w[1].n_selected(0.0));
            }
        }
    }
}
