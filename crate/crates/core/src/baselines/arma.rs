use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmaModel {
    pub p: usize,
    pub q: usize,
    pub ar: Vec<f64>,
    pub ma: Vec<f64>,
    pub constant: f64,
    /// Innovation variance.
    pub sigma2: f64,
    /// Conditional Gaussian log-likelihood of the observations after the
    /// first `conditioning` ones.
    pub log_likelihood: f64,
    pub conditioning: usize,
    pub aic: f64,
}

impl ArmaModel {
    /// Long-run mean `c / (1 - sum(ar))`.
    pub fn unconditional_mean(&self) -> f64 {
        self.constant / (1.0 - self.ar.iter().sum::<f64>())
    }
}

/// Largest modulus among the roots of `z^k - c_1 z^(k-1) - ... - c_k`.
/// Values below one mean `1 - c_1 B - ... - c_k B^k` has all roots outside
/// the unit circle.
pub fn spectral_radius(coefficients: &[f64]) -> f64 {
    match coefficients {
        [] => 0.0,
        [c] => c.abs(),
        _ => inverse_roots(coefficients)
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max),
    }
}

fn is_stationary(ar: &[f64]) -> bool {
    spectral_radius(ar) < 1.0
}

fn is_invertible(ma: &[f64]) -> bool {
    let negated: Vec<f64> = ma.iter().map(|t| -t).collect();
    spectral_radius(&negated) < 1.0
}

/// Conditional residuals with innovations before `start` set to zero.
/// Requires `start >= ar.len()`.
fn residuals(x: &[f64], start: usize, c: f64, ar: &[f64], ma: &[f64]) -> Vec<f64> {
    let mut e = vec![0.0; x.len()];
    for t in start..x.len() {
        let mut v = x[t] - c;
        for (i, phi) in ar.iter().enumerate() {
            v -= phi * x[t - 1 - i];
        }
        for (j, theta) in ma.iter().enumerate() {
            if t > j {
                v -= theta * e[t - 1 - j];
            }
        }
        e[t] = v;
    }
    e
}

/// Parameter vector layout: `[c, ar.., ma..]`.
struct Css<'a> {
    x: &'a [f64],
    p: usize,
    q: usize,
    /// Number of leading observations conditioned on; at least `p`.
    start: usize,
}

impl Css<'_> {
    fn split<'b>(&self, theta: &'b [f64]) -> (f64, &'b [f64], &'b [f64]) {
        (theta[0], &theta[1..1 + self.p], &theta[1 + self.p..])
    }

    fn m(&self) -> f64 {
        (self.x.len() - self.start) as f64
    }

    /// Log of the mean squared conditional residual, with its gradient.
    /// Outside the stationary and invertible region the value is infinite.
    fn value_and_gradient(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        let k = theta.len();
        let (c, ar, ma) = self.split(theta);
        if !is_stationary(ar) || !is_invertible(ma) {
            return (f64::INFINITY, vec![0.0; k]);
        }
        let n = self.x.len();
        let mut e = vec![0.0; n];
        // de[t][i] is stored flat at t * k + i.
        let mut de = vec![0.0; n * k];
        let mut ss = 0.0;
        let mut grad = vec![0.0; k];
        for t in self.start..n {
            let mut v = self.x[t] - c;
            for (i, phi) in ar.iter().enumerate() {
                v -= phi * self.x[t - 1 - i];
            }
            for (j, th) in ma.iter().enumerate() {
                if t > j {
                    v -= th * e[t - 1 - j];
                }
            }
            e[t] = v;
            let (done, rest) = de.split_at_mut(t * k);
            let d = &mut rest[..k];
            d[0] = -1.0;
            for i in 0..self.p {
                d[1 + i] = -self.x[t - 1 - i];
            }
            for j in 0..self.q {
                d[1 + self.p + j] = if t > j { -e[t - 1 - j] } else { 0.0 };
            }
            for (j, th) in ma.iter().enumerate() {
                if t > j && t - 1 - j >= self.start {
                    let prev = &done[(t - 1 - j) * k..(t - j) * k];
                    for (di, pi) in d.iter_mut().zip(prev) {
                        *di -= th * pi;
                    }
                }
            }
            ss += v * v;
            for (g, di) in grad.iter_mut().zip(d.iter()) {
                *g += 2.0 * v * di;
            }
        }
        if ss <= 0.0 {
            return (f64::NEG_INFINITY, vec![0.0; k]);
        }
        let value = (ss / self.m()).ln();
        (value, grad.into_iter().map(|g| g / ss).collect())
    }
}

/// Least-squares fit of `x_t` on a constant and the given lagged regressors.
fn regress(x: &[f64], start: usize, regressors: &[&dyn Fn(usize) -> f64]) -> Option<Vec<f64>> {
    let rows = x.len() - start;
    let cols = regressors.len() + 1;
    let design = DMatrix::from_fn(rows, cols, |r, c| {
        if c == 0 {
            1.0
        } else {
            regressors[c - 1](start + r)
        }
    });
    let target = nalgebra::DVector::from_iterator(rows, x[start..].iter().copied());
    let svd = design.svd(true, true);
    let eps = svd.singular_values.max() * 1e-12 * rows as f64;
    svd.solve(&target, eps)
        .ok()
        .map(|b| b.iter().copied().collect())
}

/// Hannan-Rissanen starting values: a long autoregression supplies
/// innovation estimates that enter a second regression as MA regressors.
fn hannan_rissanen(x: &[f64], p: usize, q: usize) -> Vec<f64> {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let fallback = || {
        let mut v = vec![0.0; 1 + p + q];
        v[0] = mean;
        v
    };
    if p == 0 && q == 0 {
        return fallback();
    }
    let lagged = |lag: usize| move |t: usize| x[t - lag];
    let long = if q == 0 {
        0
    } else {
        (p + q + 2)
            .max(2 * (n as f64).ln().ceil() as usize)
            .min(n / 3)
    };
    let mut innovations = vec![0.0; n];
    if q > 0 {
        let fs: Vec<_> = (1..=long).map(lagged).collect();
        let refs: Vec<&dyn Fn(usize) -> f64> =
            fs.iter().map(|f| f as &dyn Fn(usize) -> f64).collect();
        let Some(b) = regress(x, long, &refs) else {
            return fallback();
        };
        for t in long..n {
            innovations[t] = x[t] - b[0] - (1..=long).map(|i| b[i] * x[t - i]).sum::<f64>();
        }
    }
    let start = p.max(long + q);
    if start + p + q + 2 >= n {
        return fallback();
    }
    let ar_fs: Vec<_> = (1..=p).map(lagged).collect();
    let ma_fs: Vec<_> = (1..=q)
        .map(|lag| {
            let e = &innovations;
            move |t: usize| e[t - lag]
        })
        .collect();
    let mut refs: Vec<&dyn Fn(usize) -> f64> =
        ar_fs.iter().map(|f| f as &dyn Fn(usize) -> f64).collect();
    refs.extend(ma_fs.iter().map(|f| f as &dyn Fn(usize) -> f64));
    let mut theta = regress(x, start, &refs).unwrap_or_else(fallback);
    // Pull non-stationary or non-invertible starts back inside the region.
    for _ in 0..60 {
        let (_, ar, ma) = (theta[0], &theta[1..1 + p], &theta[1 + p..]);
        if is_stationary(ar) && is_invertible(ma) {
            return theta;
        }
        for v in theta[1..].iter_mut() {
            *v *= 0.8;
        }
    }
    fallback()
}

/// BFGS with Armijo backtracking on an objective that is infinite outside
/// its feasible region.
fn bfgs(
    f: &dyn Fn(&[f64]) -> (f64, Vec<f64>),
    start: Vec<f64>,
    grad_tol: f64,
    max_iters: usize,
) -> Result<Vec<f64>> {
    let k = start.len();
    let mut x = start;
    let (mut fx, mut g) = f(&x);
    if !fx.is_finite() {
        return Err(Error::FitFailure(
            "starting point is outside the admissible region".into(),
        ));
    }
    let mut h = DMatrix::<f64>::identity(k, k);
    for _ in 0..max_iters {
        if g.iter().map(|v| v.abs()).fold(0.0, f64::max) < grad_tol {
            break;
        }
        let gv = nalgebra::DVector::from_column_slice(&g);
        let mut dir = -(&h * &gv);
        let mut slope = dir.dot(&gv);
        if slope >= 0.0 {
            h = DMatrix::identity(k, k);
            dir = -gv.clone();
            slope = dir.dot(&gv);
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = x
                .iter()
                .zip(dir.iter())
                .map(|(a, d)| a + step * d)
                .collect();
            let (ft, gt) = f(&trial);
            if ft.is_finite() && ft <= fx + 1e-4 * step * slope {
                accepted = Some((trial, ft, gt));
                break;
            }
            step *= 0.5;
        }
        let Some((next, f_next, g_next)) = accepted else {
            break;
        };
        let s = nalgebra::DVector::from_iterator(k, next.iter().zip(&x).map(|(a, b)| a - b));
        let yv = nalgebra::DVector::from_iterator(k, g_next.iter().zip(&g).map(|(a, b)| a - b));
        let sy = s.dot(&yv);
        let improvement = fx - f_next;
        x = next;
        fx = f_next;
        g = g_next;
        if sy > 1e-12 {
            let rho = 1.0 / sy;
            let i = DMatrix::<f64>::identity(k, k);
            let left = &i - rho * &s * yv.transpose();
            let right = &i - rho * &yv * s.transpose();
            h = &left * &h * &right + rho * &s * s.transpose();
        }
        if improvement.abs() < 1e-14 * fx.abs().max(1.0) {
            break;
        }
    }
    Ok(x)
}

pub fn min_length(p: usize, q: usize) -> usize {
    10 * (p + q + 1)
}

/// Fits ARMA(p, q) by conditional least squares, which maximizes the
/// Gaussian likelihood conditional on the first `p` observations.
pub fn fit_arma(series: &[f64], p: usize, q: usize) -> Result<ArmaModel> {
    fit_arma_conditioned(series, p, q, p)
}

/// As [`fit_arma`], conditioning on the first `start >= p` observations so
/// that likelihoods of different orders cover the same sample.
pub fn fit_arma_conditioned(series: &[f64], p: usize, q: usize, start: usize) -> Result<ArmaModel> {
    let needed = min_length(p, q);
    if series.len() < needed {
        return Err(Error::SeriesTooShort {
            p,
            q,
            needed,
            len: series.len(),
        });
    }
    if start < p || start + p + q + 2 > series.len() {
        return Err(Error::Contract(format!(
            "cannot condition ARMA({p},{q}) on {start} observations"
        )));
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::FitFailure(
            "series contains non-finite values".into(),
        ));
    }
    let n = series.len() as f64;
    let mean = series.iter().sum::<f64>() / n;
    let var = series.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    if var <= 1e-12 * mean.abs().max(1.0).powi(2) {
        return Err(Error::FitFailure("series is constant".into()));
    }
    let css = Css {
        x: series,
        p,
        q,
        start,
    };
    let objective = |theta: &[f64]| css.value_and_gradient(theta);
    let theta = bfgs(&objective, hannan_rissanen(series, p, q), 1e-8, 200)?;
    let (c, ar, ma) = css.split(&theta);
    if !is_stationary(ar) {
        return Err(Error::FitFailure(format!(
            "ARMA({p},{q}) optimum is not stationary"
        )));
    }
    let e = residuals(series, start, c, ar, ma);
    let m = css.m();
    let sigma2 = e[start..].iter().map(|v| v * v).sum::<f64>() / m;
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(Error::FitFailure(format!(
            "ARMA({p},{q}) has degenerate innovation variance"
        )));
    }
    let log_likelihood = -0.5 * m * ((2.0 * std::f64::consts::PI * sigma2).ln() + 1.0);
    Ok(ArmaModel {
        p,
        q,
        ar: ar.to_vec(),
        ma: ma.to_vec(),
        constant: c,
        sigma2,
        log_likelihood,
        conditioning: start,
        aic: 2.0 * (p + q + 2) as f64 - 2.0 * log_likelihood,
    })
}

/// Inverse roots of `1 - c_1 B - ... - c_k B^k`, i.e. the eigenvalues of its
/// companion matrix.
pub fn inverse_roots(coefficients: &[f64]) -> Vec<nalgebra::Complex<f64>> {
    let k = coefficients.len();
    if k == 0 {
        return Vec::new();
    }
    let mut companion = DMatrix::zeros(k, k);
    for (j, c) in coefficients.iter().enumerate() {
        companion[(0, j)] = *c;
    }
    for i in 1..k {
        companion[(i, i - 1)] = 1.0;
    }
    companion.complex_eigenvalues().iter().copied().collect()
}

/// Smallest distance between an AR inverse root and an MA inverse root.
pub fn common_factor_distance(ar: &[f64], ma: &[f64]) -> f64 {
    let negated: Vec<f64> = ma.iter().map(|t| -t).collect();
    let ma_roots = inverse_roots(&negated);
    inverse_roots(ar)
        .iter()
        .flat_map(|a| ma_roots.iter().map(move |m| (a - m).norm()))
        .fold(f64::INFINITY, f64::min)
}

/// Fits whose AR and MA parts share an inverse root to within this distance
/// are treated as redundant, since the cancelling factor is not identified.
pub const COMMON_FACTOR_TOLERANCE: f64 = 0.1;

/// Minimum-AIC model over the given orders. Orders too long for the series,
/// that fail to fit, or whose fit has a near-common AR/MA factor are skipped;
/// ties go to the smaller `p + q`, then the smaller `p`. All orders condition
/// on the same leading observations.
pub fn select_order_aic_over(series: &[f64], orders: &[(usize, usize)]) -> Result<ArmaModel> {
    let mut sorted: Vec<(usize, usize)> = orders
        .iter()
        .copied()
        .filter(|&(p, q)| series.len() >= min_length(p, q))
        .collect();
    sorted.sort_by_key(|&(p, q)| (p + q, p));
    sorted.dedup();
    if sorted.is_empty() {
        return Err(Error::FitFailure(format!(
            "series of length {} is too short for every order",
            series.len()
        )));
    }
    let start = sorted.iter().map(|o| o.0).max().unwrap_or(0);
    let mut best: Option<ArmaModel> = None;
    let mut last_error = None;
    for (p, q) in sorted {
        match fit_arma_conditioned(series, p, q, start) {
            Ok(m) if common_factor_distance(&m.ar, &m.ma) < COMMON_FACTOR_TOLERANCE => {
                last_error = Some(Error::FitFailure(format!(
                    "ARMA({p},{q}) has a redundant AR/MA factor"
                )));
            }
            Ok(m) => {
                if best.as_ref().is_none_or(|b| m.aic < b.aic) {
                    best = Some(m);
                }
            }
            Err(e) => last_error = Some(e),
        }
    }
    best.ok_or_else(|| {
        Error::FitFailure(match last_error {
            Some(e) => format!("no ARMA order could be fit: {e}"),
            None => "no ARMA orders given".into(),
        })
    })
}

pub fn select_order_aic(series: &[f64], p_max: usize, q_max: usize) -> Result<ArmaModel> {
    let orders: Vec<(usize, usize)> = (0..=p_max)
        .flat_map(|p| (0..=q_max).map(move |q| (p, q)))
        .collect();
    select_order_aic_over(series, &orders)
}

/// Iterated conditional-mean forecasts for the `horizon` steps after
/// `history`. Innovations after the history are zero.
pub fn forecast(model: &ArmaModel, history: &[f64], horizon: usize) -> Vec<f64> {
    let mu = model.unconditional_mean();
    let pad = model.p.saturating_sub(history.len());
    let mut x: Vec<f64> =
        std::iter::repeat_n(if mu.is_finite() { mu } else { model.constant }, pad)
            .chain(history.iter().copied())
            .collect();
    let mut e = residuals(&x, model.p, model.constant, &model.ar, &model.ma);
    let n = x.len();
    for t in n..n + horizon {
        let mut v = model.constant;
        for (i, phi) in model.ar.iter().enumerate() {
            v += phi * x[t - 1 - i];
        }
        for (j, theta) in model.ma.iter().enumerate() {
            if t > j {
                v += theta * e[t - 1 - j];
            }
        }
        x.push(v);
        e.push(0.0);
    }
    x.split_off(n)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    /// ARMA simulation with a burn-in so the start-up transient is gone.
    pub(crate) fn simulate(seed: u64, n: usize, c: f64, ar: &[f64], ma: &[f64]) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let burn = 500;
        let mut x = vec![0.0; n + burn];
        let mut e = vec![0.0; n + burn];
        for t in 0..n + burn {
            e[t] = rng.sample(StandardNormal);
            let mut v = c + e[t];
            for (i, phi) in ar.iter().enumerate() {
                if t > i {
                    v += phi * x[t - 1 - i];
                }
            }
            for (j, th) in ma.iter().enumerate() {
                if t > j {
                    v += th * e[t - 1 - j];
                }
            }
            x[t] = v;
        }
        x.split_off(burn)
    }

    #[test]
    fn white_noise_mean_model() {
        let x: Vec<f64> = simulate(1, 400, 5.0, &[], &[]);
        let m = fit_arma(&x, 0, 0).unwrap();
        let mean = x.iter().sum::<f64>() / 400.0;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 400.0;
        assert!((m.constant - mean).abs() < 1e-6);
        assert!((m.sigma2 - var).abs() < 1e-6);
        assert!((m.aic - (4.0 - 2.0 * m.log_likelihood)).abs() < 1e-12);
    }

    #[test]
    fn recovers_ar1() {
        let x = simulate(2, 1000, 0.0, &[0.7], &[]);
        let m = fit_arma(&x, 1, 0).unwrap();
        assert!((0.6..=0.8).contains(&m.ar[0]), "phi {}", m.ar[0]);
    }

    #[test]
    fn recovers_ma1() {
        let x = simulate(3, 1000, 0.0, &[], &[0.5]);
        let m = fit_arma(&x, 0, 1).unwrap();
        assert!((0.4..=0.6).contains(&m.ma[0]), "theta {}", m.ma[0]);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let x = simulate(4, 200, 1.0, &[0.5, -0.2], &[0.3]);
        let css = Css {
            x: &x,
            p: 2,
            q: 1,
            start: 3,
        };
        let theta = [0.8, 0.4, -0.1, 0.2];
        let (_, g) = css.value_and_gradient(&theta);
        for i in 0..4 {
            let mut up = theta;
            let mut down = theta;
            up[i] += 1e-6;
            down[i] -= 1e-6;
            let numeric = (css.value_and_gradient(&up).0 - css.value_and_gradient(&down).0) / 2e-6;
            assert!(
                (numeric - g[i]).abs() < 1e-6,
                "coordinate {i}: {numeric} vs {}",
                g[i]
            );
        }
    }

    #[test]
    fn too_short_and_constant_series_fail() {
        assert!(matches!(
            fit_arma(&[1.0; 15], 1, 0),
            Err(Error::SeriesTooShort { needed: 20, .. })
        ));
        assert!(matches!(
            fit_arma(&[3.0; 50], 1, 0),
            Err(Error::FitFailure(_))
        ));
    }

    #[test]
    fn singleton_order_grid() {
        let x = simulate(5, 300, 0.0, &[0.5], &[]);
        let m = select_order_aic_over(&x, &[(1, 0)]).unwrap();
        assert_eq!((m.p, m.q), (1, 0));
        assert!(select_order_aic_over(&[2.0; 30], &[(0, 0), (1, 0)]).is_err());
    }

    #[test]
    fn forecast_examples() {
        let flat = ArmaModel {
            p: 0,
            q: 0,
            ar: vec![],
            ma: vec![],
            constant: 100.0,
            sigma2: 1.0,
            log_likelihood: 0.0,
            conditioning: 0,
            aic: 0.0,
        };
        assert_eq!(forecast(&flat, &[90.0, 110.0], 3), vec![100.0; 3]);
        let ar1 = ArmaModel {
            p: 1,
            ar: vec![0.5],
            constant: 0.0,
            ..flat.clone()
        };
        assert_eq!(forecast(&ar1, &[3.0, 8.0], 3), vec![4.0, 2.0, 1.0]);
        let arma = ArmaModel {
            p: 1,
            q: 1,
            ar: vec![0.5],
            ma: vec![0.4],
            constant: 1.0,
            ..flat
        };
        // One step ahead: c + phi x_n + theta e_n, with e_n from the recursion.
        let h = [2.0, 3.0, 2.5];
        let e1 = 3.0 - 1.0 - 0.5 * 2.0;
        let e2 = 2.5 - 1.0 - 0.5 * 3.0 - 0.4 * e1;
        assert!((forecast(&arma, &h, 1)[0] - (1.0 + 0.5 * 2.5 + 0.4 * e2)).abs() < 1e-12);
    }

    #[test]
    fn forecast_converges_to_unconditional_mean() {
        let x = simulate(6, 500, 2.0, &[0.6, 0.2], &[0.3]);
        let m = fit_arma(&x, 2, 1).unwrap();
        let radius = spectral_radius(&m.ar);
        // Horizon long enough for radius^h to fall far below 1e-6.
        let horizon = ((1e-9f64).ln() / radius.ln()).ceil() as usize * 10;
        let f = forecast(&m, &x, horizon);
        assert!((f[horizon - 1] - m.unconditional_mean()).abs() < 1e-6);
    }

    #[test]
    fn common_factor_examples() {
        // (1 - 0.5B) against (1 - 0.5B): an exact common factor.
        assert!(common_factor_distance(&[0.5], &[-0.5]) < 1e-12);
        assert!((common_factor_distance(&[0.5], &[0.5]) - 1.0).abs() < 1e-12);
        assert_eq!(common_factor_distance(&[0.5], &[]), f64::INFINITY);
        let roots = inverse_roots(&[1.5, -0.56]);
        let mut moduli: Vec<f64> = roots.iter().map(|z| z.norm()).collect();
        moduli.sort_by(f64::total_cmp);
        assert!((moduli[0] - 0.7).abs() < 1e-12 && (moduli[1] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn spectral_radius_examples() {
        assert_eq!(spectral_radius(&[]), 0.0);
        assert_eq!(spectral_radius(&[-0.5]), 0.5);
        // z^2 - 1.5 z + 0.56 has roots 0.7 and 0.8.
        assert!((spectral_radius(&[1.5, -0.56]) - 0.8).abs() < 1e-12);
        assert!(!is_stationary(&[0.5, 0.6]));
        assert!(is_invertible(&[0.5]) && !is_invertible(&[1.2]));
    }
}
