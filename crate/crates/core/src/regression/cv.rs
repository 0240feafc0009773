use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use chrono::NaiveDate;
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fit_lasso, lasso_path, mae, rmse, LassoParams};
use crate::error::{Error, Result};

/// Source of design matrices for cross-validation. Implementations that
/// derive columns from fitted quantities must use only the training rows.
pub trait FoldFeatures: Sync {
    fn n_rows(&self) -> usize;

    /// Design matrices for the `train` rows and the `eval` rows, in the given order.
    fn build(&self, train: &[usize], eval: &[usize]) -> Result<(DMatrix<f64>, DMatrix<f64>)>;
}

pub(crate) fn select_rows(x: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), x.ncols(), |i, j| x[(rows[i], j)])
}

impl FoldFeatures for DMatrix<f64> {
    fn n_rows(&self) -> usize {
        self.nrows()
    }

    fn build(&self, train: &[usize], eval: &[usize]) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        Ok((select_rows(self, train), select_rows(self, eval)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AlphaGrid {
    /// Log-spaced from the data's alpha_max down to alpha_max times `ratio`.
    Auto {
        count: usize,
        ratio: f64,
    },
    Explicit {
        values: Vec<f64>,
    },
}

impl Default for AlphaGrid {
    fn default() -> Self {
        AlphaGrid::Auto {
            count: 50,
            ratio: 1e-4,
        }
    }
}

impl AlphaGrid {
    /// Concrete grid in decreasing order.
    fn resolve(&self, x: &DMatrix<f64>, y: &[f64]) -> Result<Vec<f64>> {
        let mut values = match self {
            AlphaGrid::Auto { count, ratio } => super::alpha_grid(x, y, *count, *ratio)?,
            AlphaGrid::Explicit { values } => {
                if values.is_empty() {
                    return Err(Error::Config("alpha grid is empty".into()));
                }
                if let Some(bad) = values.iter().find(|a| !(**a >= 0.0 && a.is_finite())) {
                    return Err(Error::Config(format!("invalid alpha {bad}")));
                }
                values.clone()
            }
        };
        values.sort_by(|a, b| b.total_cmp(a));
        values.dedup();
        Ok(values)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub outer_folds: usize,
    pub inner_folds: usize,
    pub grid: AlphaGrid,
    pub seed: u64,
    pub lasso: LassoParams,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            outer_folds: 3,
            inner_folds: 4,
            grid: AlphaGrid::default(),
            seed: 0,
            lasso: LassoParams::default(),
        }
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Shuffles `rows` and splits them into `k` folds whose sizes differ by at
/// most one. Each fold is returned sorted.
pub fn kfold(rows: &[usize], k: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<usize>>> {
    if k < 2 || rows.len() < k {
        return Err(Error::FoldSize {
            rows: rows.len(),
            folds: k,
        });
    }
    let mut shuffled = rows.to_vec();
    shuffled.shuffle(rng);
    let base = rows.len() / k;
    let extra = rows.len() % k;
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for i in 0..k {
        let len = base + usize::from(i < extra);
        let mut fold = shuffled[start..start + len].to_vec();
        fold.sort_unstable();
        folds.push(fold);
        start += len;
    }
    Ok(folds)
}

fn complement(rows: &[usize], fold: &[usize]) -> Vec<usize> {
    let held: BTreeSet<usize> = fold.iter().copied().collect();
    rows.iter().copied().filter(|r| !held.contains(r)).collect()
}

fn gather(y: &[f64], rows: &[usize]) -> Vec<f64> {
    rows.iter().map(|&r| y[r]).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaSelection {
    pub alpha: f64,
    /// Candidate values in decreasing order.
    pub alphas: Vec<f64>,
    pub mean_rmse: Vec<f64>,
    /// Row indices of each inner validation fold.
    pub folds: Vec<Vec<usize>>,
}

/// Chooses alpha by k-fold cross-validation restricted to `rows`. Equal mean
/// errors resolve toward the larger alpha.
pub fn select_alpha_on(
    features: &dyn FoldFeatures,
    y: &[f64],
    rows: &[usize],
    grid: &AlphaGrid,
    folds: usize,
    seed: u64,
    params: &LassoParams,
) -> Result<AlphaSelection> {
    if rows.len() < folds {
        return Err(Error::FoldSize {
            rows: rows.len(),
            folds,
        });
    }
    let (x_all, _) = features.build(rows, &[])?;
    let alphas = grid.resolve(&x_all, &gather(y, rows))?;
    let fold_rows = kfold(rows, folds, &mut stream_rng(seed, 0))?;
    let fold_errors: Vec<Vec<f64>> = fold_rows
        .par_iter()
        .map(|held| -> Result<Vec<f64>> {
            let train = complement(rows, held);
            let (x_train, x_held) = features.build(&train, held)?;
            let y_train = gather(y, &train);
            let y_held = gather(y, held);
            lasso_path(&x_train, &y_train, &alphas, params)?
                .iter()
                .map(|fit| rmse(&fit.predict(&x_held), &y_held))
                .collect()
        })
        .collect::<Result<_>>()?;
    let mean_rmse: Vec<f64> = (0..alphas.len())
        .map(|a| fold_errors.iter().map(|e| e[a]).sum::<f64>() / folds as f64)
        .collect();
    let mut best = 0;
    for a in 1..alphas.len() {
        let margin = 1e-12 * mean_rmse[best].abs().max(f64::MIN_POSITIVE);
        if mean_rmse[a] < mean_rmse[best] - margin {
            best = a;
        }
    }
    Ok(AlphaSelection {
        alpha: alphas[best],
        alphas,
        mean_rmse,
        folds: fold_rows,
    })
}

/// Chooses alpha by k-fold cross-validation over every row of `x`.
pub fn select_alpha(
    x: &DMatrix<f64>,
    y: &[f64],
    grid: &AlphaGrid,
    folds: usize,
    seed: u64,
    params: &LassoParams,
) -> Result<AlphaSelection> {
    if x.nrows() != y.len() {
        return Err(Error::LengthMismatch {
            expected: x.nrows(),
            actual: y.len(),
        });
    }
    let rows: Vec<usize> = (0..y.len()).collect();
    select_alpha_on(x, y, &rows, grid, folds, seed, params)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvaluationMode {
    NestedCv,
    FixedSplit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub train_days: Vec<NaiveDate>,
    pub test_days: Vec<NaiveDate>,
    pub inner_folds: Vec<Vec<NaiveDate>>,
    pub alpha: f64,
    pub rmse: f64,
    pub mae: f64,
    pub n_selected: usize,
    pub converged: bool,
    /// All outer-test targets are equal.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub day: NaiveDate,
    pub fold: usize,
    pub actual: f64,
    pub predicted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub mode: EvaluationMode,
    pub folds: Vec<FoldReport>,
    pub mean_rmse: f64,
    pub mean_mae: f64,
    pub pooled_rmse: f64,
    pub pooled_mae: f64,
    /// Sorted by day.
    pub predictions: Vec<PredictionRow>,
    /// Number of set assertions checked by the leakage audit.
    pub audit_checks: usize,
}

pub const PREDICTION_HEADER: &str = "day,fold,actual,predicted";

impl EvaluationReport {
    pub fn write_predictions<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(PREDICTION_HEADER.split(','))?;
        for p in &self.predictions {
            w.write_record([
                p.day.to_string(),
                (p.fold + 1).to_string(),
                p.actual.to_string(),
                p.predicted.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<predictions>", e))?;
        Ok(())
    }

    pub fn write_predictions_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_predictions(std::io::BufWriter::new(file))
    }
}

/// Checks that every outer training set is disjoint from its test set, that
/// together they cover all `n` rows, that test sets never overlap, and that
/// the inner folds of each outer fold partition exactly its training set.
/// Returns the number of checks performed.
pub fn audit_folds(
    n: usize,
    outer: &[(Vec<usize>, Vec<usize>)],
    inner: &[Vec<Vec<usize>>],
) -> Result<usize> {
    let fail = |msg: String| Err(Error::Contract(format!("leakage audit: {msg}")));
    if outer.len() != inner.len() {
        return fail(format!(
            "{} outer folds but {} inner fold sets",
            outer.len(),
            inner.len()
        ));
    }
    let mut checks = 0;
    let mut seen_test = BTreeSet::new();
    for (i, ((train, test), inner_folds)) in outer.iter().zip(inner).enumerate() {
        let train_set: BTreeSet<usize> = train.iter().copied().collect();
        let test_set: BTreeSet<usize> = test.iter().copied().collect();
        checks += 1;
        if train_set.len() != train.len() || test_set.len() != test.len() {
            return fail(format!("fold {i} repeats a row"));
        }
        checks += 1;
        if !train_set.is_disjoint(&test_set) {
            return fail(format!("fold {i} trains on a test row"));
        }
        checks += 1;
        if train_set.len() + test_set.len() != n
            || train_set.iter().chain(&test_set).any(|&r| r >= n)
        {
            return fail(format!("fold {i} does not cover the {n} rows"));
        }
        checks += 1;
        if !seen_test.is_disjoint(&test_set) {
            return fail(format!("fold {i} reuses a test row of an earlier fold"));
        }
        seen_test.extend(test_set.iter().copied());
        let mut inner_union = BTreeSet::new();
        for (j, fold) in inner_folds.iter().enumerate() {
            checks += 1;
            if fold.iter().any(|r| !train_set.contains(r)) {
                return fail(format!(
                    "inner fold {j} of fold {i} uses rows outside outer training"
                ));
            }
            checks += 1;
            let before = inner_union.len();
            inner_union.extend(fold.iter().copied());
            if inner_union.len() != before + fold.len() {
                return fail(format!("inner folds of fold {i} overlap"));
            }
        }
        checks += 1;
        if inner_union != train_set {
            return fail(format!(
                "inner folds of fold {i} do not cover outer training"
            ));
        }
    }
    Ok(checks)
}

struct OuterResult {
    report: FoldReport,
    inner_rows: Vec<Vec<usize>>,
    predictions: Vec<PredictionRow>,
}

fn evaluate_fold(
    features: &dyn FoldFeatures,
    y: &[f64],
    days: &[NaiveDate],
    fold: usize,
    train: &[usize],
    test: &[usize],
    cfg: &CvConfig,
) -> Result<OuterResult> {
    let inner_seed = cfg.seed ^ (fold as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    let selection = select_alpha_on(
        features,
        y,
        train,
        &cfg.grid,
        cfg.inner_folds,
        inner_seed,
        &cfg.lasso,
    )?;
    let (x_train, x_test) = features.build(train, test)?;
    let fit = fit_lasso(&x_train, &gather(y, train), selection.alpha, &cfg.lasso)?;
    let predicted = fit.predict(&x_test);
    let actual = gather(y, test);
    let to_days = |rows: &[usize]| rows.iter().map(|&r| days[r]).collect::<Vec<_>>();
    let report = FoldReport {
        fold,
        train_days: to_days(train),
        test_days: to_days(test),
        inner_folds: selection.folds.iter().map(|f| to_days(f)).collect(),
        alpha: selection.alpha,
        rmse: rmse(&predicted, &actual)?,
        mae: mae(&predicted, &actual)?,
        n_selected: fit.n_selected(0.0),
        converged: fit.converged,
        degenerate: actual.iter().all(|v| *v == actual[0]),
    };
    let predictions = test
        .iter()
        .zip(predicted.iter().zip(&actual))
        .map(|(&r, (&p, &a))| PredictionRow {
            day: days[r],
            fold,
            actual: a,
            predicted: p,
        })
        .collect();
    Ok(OuterResult {
        report,
        inner_rows: selection.folds,
        predictions,
    })
}

fn check_inputs(features: &dyn FoldFeatures, y: &[f64], days: &[NaiveDate]) -> Result<usize> {
    let n = features.n_rows();
    for len in [y.len(), days.len()] {
        if len != n {
            return Err(Error::LengthMismatch {
                expected: n,
                actual: len,
            });
        }
    }
    Ok(n)
}

fn assemble(
    mode: EvaluationMode,
    n: usize,
    splits: Vec<(Vec<usize>, Vec<usize>)>,
    results: Vec<OuterResult>,
) -> Result<EvaluationReport> {
    let inner: Vec<Vec<Vec<usize>>> = results.iter().map(|r| r.inner_rows.clone()).collect();
    let audit_checks = audit_folds(n, &splits, &inner)?;
    let mut predictions: Vec<PredictionRow> =
        results.iter().flat_map(|r| r.predictions.clone()).collect();
    predictions.sort_by_key(|p| p.day);
    let pred: Vec<f64> = predictions.iter().map(|p| p.predicted).collect();
    let actual: Vec<f64> = predictions.iter().map(|p| p.actual).collect();
    let folds: Vec<FoldReport> = results.into_iter().map(|r| r.report).collect();
    let k = folds.len() as f64;
    Ok(EvaluationReport {
        mode,
        mean_rmse: folds.iter().map(|f| f.rmse).sum::<f64>() / k,
        mean_mae: folds.iter().map(|f| f.mae).sum::<f64>() / k,
        pooled_rmse: rmse(&pred, &actual)?,
        pooled_mae: mae(&pred, &actual)?,
        folds,
        predictions,
        audit_checks,
    })
}

/// Two-level cross-validation: alpha is chosen by inner CV on each outer
/// training set, refit there, and scored on the outer test set.
pub fn nested_cv_evaluate(
    features: &dyn FoldFeatures,
    y: &[f64],
    days: &[NaiveDate],
    cfg: &CvConfig,
) -> Result<EvaluationReport> {
    let n = check_inputs(features, y, days)?;
    let rows: Vec<usize> = (0..n).collect();
    let outer = kfold(&rows, cfg.outer_folds, &mut stream_rng(cfg.seed, 0))?;
    let splits: Vec<(Vec<usize>, Vec<usize>)> = outer
        .into_iter()
        .map(|test| (complement(&rows, &test), test))
        .collect();
    let results = splits
        .par_iter()
        .enumerate()
        .map(|(i, (train, test))| evaluate_fold(features, y, days, i, train, test, cfg))
        .collect::<Result<Vec<_>>>()?;
    assemble(EvaluationMode::NestedCv, n, splits, results)
}

/// Trains on the first `n_train` rows and tests on the rest, with alpha
/// chosen by inner CV on the training rows.
pub fn fixed_split_evaluate(
    features: &dyn FoldFeatures,
    y: &[f64],
    days: &[NaiveDate],
    n_train: usize,
    cfg: &CvConfig,
) -> Result<EvaluationReport> {
    let n = check_inputs(features, y, days)?;
    if n_train == 0 || n_train >= n {
        return Err(Error::Config(format!(
            "fixed split needs 0 < train size < {n}, got {n_train}"
        )));
    }
    let train: Vec<usize> = (0..n_train).collect();
    let test: Vec<usize> = (n_train..n).collect();
    let result = evaluate_fold(features, y, days, 0, &train, &test, cfg)?;
    assemble(
        EvaluationMode::FixedSplit,
        n,
        vec![(train, test)],
        vec![result],
    )
}
