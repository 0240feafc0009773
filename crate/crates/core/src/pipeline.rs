//! Per-segment evaluation of the feature sets against congestion targets and
//! comparison with the traffic-only baselines.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::baselines::{historical_mean_cst, ArmaCstPrediction};
use crate::clustering::{fit_patterns, KMeansParams, PatternAssignment};
use crate::congestion::CongestionRecord;
use crate::data::{format_clock, ProfilePanel};
use crate::error::{Error, Result};
use crate::features::{
    aggregate_features, append_cst_feature, disaggregate_features, historical_window,
    mixed_features, FeatureKind, FeatureMatrix, HistoricalWindow,
};
use crate::regression::{
    fit_lasso, fixed_split_evaluate, mae, nested_cv_evaluate, rmse, select_alpha_on, select_rows,
    CvConfig, EvaluationMode, EvaluationReport, FittedPredictor, FoldFeatures, LinearFit, Target,
};

/// How the held-out error is estimated.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum Protocol {
    #[default]
    NestedCv,
    /// The first `train_days` aligned days train, the rest test.
    FixedSplit { train_days: usize },
}

/// Aggregate shares plus the ARMA CST clipped to the window of CSTs seen on
/// the training rows of each fold.
struct MixedColumns {
    shares: DMatrix<f64>,
    arma_cst: Vec<Option<f64>>,
    observed_cst: Vec<f64>,
}

impl MixedColumns {
    fn window(&self, train: &[usize]) -> Result<HistoricalWindow> {
        if train.is_empty() {
            return Err(Error::NoObservations(
                "no training rows for the CST window".into(),
            ));
        }
        let t_plus = train
            .iter()
            .map(|&r| self.observed_cst[r])
            .fold(f64::INFINITY, f64::min);
        let t_minus = train
            .iter()
            .map(|&r| self.observed_cst[r])
            .fold(f64::NEG_INFINITY, f64::max);
        Ok(HistoricalWindow { t_plus, t_minus })
    }

    fn with_column(&self, rows: &[usize], window: &HistoricalWindow) -> DMatrix<f64> {
        let p = self.shares.ncols();
        let mut out = select_rows(&self.shares, rows).insert_column(p, 0.0);
        for (i, &r) in rows.iter().enumerate() {
            out[(i, p)] = window.clip(self.arma_cst[r]);
        }
        out
    }
}

impl FoldFeatures for MixedColumns {
    fn n_rows(&self) -> usize {
        self.shares.nrows()
    }

    fn build(&self, train: &[usize], eval: &[usize]) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let window = self.window(train)?;
        Ok((
            self.with_column(train, &window),
            self.with_column(eval, &window),
        ))
    }
}

/// Aggregate shares plus the CST predicted by an aggregate-feature LASSO
/// model that is trained on the training rows of each fold only.
struct CstAugmented<'a> {
    shares: DMatrix<f64>,
    observed_cst: Vec<f64>,
    cfg: &'a CvConfig,
}

impl CstAugmented<'_> {
    fn cst_model(&self, train: &[usize]) -> Result<LinearFit> {
        let selection = select_alpha_on(
            &self.shares,
            &self.observed_cst,
            train,
            &self.cfg.grid,
            self.cfg.inner_folds.min(train.len()),
            self.cfg.seed,
            &self.cfg.lasso,
        )?;
        let x = select_rows(&self.shares, train);
        let y: Vec<f64> = train.iter().map(|&r| self.observed_cst[r]).collect();
        fit_lasso(&x, &y, selection.alpha, &self.cfg.lasso)
    }

    fn with_prediction(&self, rows: &[usize], model: &LinearFit) -> DMatrix<f64> {
        let base = select_rows(&self.shares, rows);
        let predicted = model.predict(&base);
        let p = base.ncols();
        let mut out = base.insert_column(p, 0.0);
        for (i, v) in predicted.into_iter().enumerate() {
            out[(i, p)] = v;
        }
        out
    }
}

impl FoldFeatures for CstAugmented<'_> {
    fn n_rows(&self) -> usize {
        self.shares.nrows()
    }

    fn build(&self, train: &[usize], eval: &[usize]) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let model = self.cst_model(train)?;
        Ok((
            self.with_prediction(train, &model),
            self.with_prediction(eval, &model),
        ))
    }
}

/// Evaluation of one feature set on one segment and target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentEvaluation {
    pub segment_id: String,
    pub target: Target,
    pub feature_kind: FeatureKind,
    pub n_days: usize,
    pub report: EvaluationReport,
    /// Refit on every aligned day with alpha chosen by cross-validation.
    pub model: FittedPredictor,
}

/// Inputs shared by every evaluation on one segment.
pub struct SegmentData<'a> {
    pub segment_id: &'a str,
    /// Records of this segment only.
    pub records: &'a [CongestionRecord],
    /// ARMA CST per day, required for mixed features.
    pub arma: Option<&'a BTreeMap<NaiveDate, Option<f64>>>,
}

/// Feature matrix of the requested kind over all assignment days.
pub fn build_features(
    assignment: &PatternAssignment,
    k: usize,
    kind: FeatureKind,
) -> Result<FeatureMatrix> {
    match kind {
        FeatureKind::Aggregate | FeatureKind::Mixed | FeatureKind::AggregateCst => {
            aggregate_features(assignment, k)
        }
        FeatureKind::Disaggregate => disaggregate_features(assignment, k),
    }
}

/// Days with a CST and a target value, in feature order.
fn aligned_rows(
    features: &FeatureMatrix,
    records: &[CongestionRecord],
    target: Target,
) -> Result<(Vec<usize>, Vec<f64>, Vec<f64>)> {
    let by_day: BTreeMap<NaiveDate, &CongestionRecord> =
        records.iter().map(|r| (r.day, r)).collect();
    let mut rows = Vec::new();
    let mut y = Vec::new();
    let mut cst = Vec::new();
    for (i, day) in features.days.iter().enumerate() {
        let Some(rec) = by_day.get(day) else { continue };
        if let (Some(v), Some(c)) = (target.of(rec), rec.cst) {
            rows.push(i);
            y.push(v);
            cst.push(c);
        }
    }
    if rows.is_empty() {
        return Err(Error::NoObservations(
            "no congested days align with the feature days".into(),
        ));
    }
    Ok((rows, y, cst))
}

fn run_protocol(
    features: &dyn FoldFeatures,
    y: &[f64],
    days: &[NaiveDate],
    protocol: Protocol,
    cfg: &CvConfig,
) -> Result<EvaluationReport> {
    match protocol {
        Protocol::NestedCv => nested_cv_evaluate(features, y, days, cfg),
        Protocol::FixedSplit { train_days } => {
            fixed_split_evaluate(features, y, days, train_days, cfg)
        }
    }
}

fn final_model(
    features: &dyn FoldFeatures,
    y: &[f64],
    cfg: &CvConfig,
) -> Result<(DMatrix<f64>, LinearFit)> {
    let all: Vec<usize> = (0..y.len()).collect();
    let selection = select_alpha_on(
        features,
        y,
        &all,
        &cfg.grid,
        cfg.inner_folds,
        cfg.seed,
        &cfg.lasso,
    )?;
    let (x, _) = features.build(&all, &[])?;
    let fit = fit_lasso(&x, y, selection.alpha, &cfg.lasso)?;
    Ok((x, fit))
}

/// Evaluates one feature set for one segment and target. `features` must be
/// aggregate for the mixed and aggregate+CST kinds and disaggregate for the
/// disaggregate kind.
pub fn evaluate_segment(
    features: &FeatureMatrix,
    data: &SegmentData<'_>,
    kind: FeatureKind,
    target: Target,
    protocol: Protocol,
    cfg: &CvConfig,
) -> Result<SegmentEvaluation> {
    let base_kind = match kind {
        FeatureKind::Disaggregate => FeatureKind::Disaggregate,
        _ => FeatureKind::Aggregate,
    };
    if features.kind != base_kind {
        return Err(Error::Contract(format!(
            "{} evaluation needs {} features, got {}",
            kind.name(),
            base_kind.name(),
            features.kind.name()
        )));
    }
    let (rows, y, cst) = aligned_rows(features, data.records, target)?;
    let aligned = features.select_rows(&rows);
    let days = aligned.days.clone();
    let (report, x_final, fit, names) = match kind {
        FeatureKind::Aggregate | FeatureKind::Disaggregate => {
            let report = run_protocol(&aligned.values, &y, &days, protocol, cfg)?;
            let (x, fit) = final_model(&aligned.values, &y, cfg)?;
            (report, x, fit, aligned.clone())
        }
        FeatureKind::Mixed => {
            let arma = data.arma.ok_or_else(|| {
                Error::Contract("mixed features need ARMA CST predictions".into())
            })?;
            let arma_cst: Vec<Option<f64>> = days
                .iter()
                .map(|d| arma.get(d).copied().flatten())
                .collect();
            let source = MixedColumns {
                shares: aligned.values.clone(),
                arma_cst: arma_cst.clone(),
                observed_cst: cst.clone(),
            };
            let report = run_protocol(&source, &y, &days, protocol, cfg)?;
            let (x, fit) = final_model(&source, &y, cfg)?;
            let window = historical_window(data.records.iter().filter(|r| days.contains(&r.day)))?;
            let named = mixed_features(&aligned, &arma_cst, &window)?;
            (report, x, fit, named)
        }
        FeatureKind::AggregateCst => {
            let source = CstAugmented {
                shares: aligned.values.clone(),
                observed_cst: cst.clone(),
                cfg,
            };
            let report = run_protocol(&source, &y, &days, protocol, cfg)?;
            let (x, fit) = final_model(&source, &y, cfg)?;
            let column: Vec<Option<f64>> = (0..x.nrows())
                .map(|i| Some(x[(i, x.ncols() - 1)]))
                .collect();
            let named = append_cst_feature(&aligned, &column)?;
            (report, x, fit, named)
        }
    };
    debug_assert_eq!(x_final.ncols(), names.names.len());
    Ok(SegmentEvaluation {
        segment_id: data.segment_id.to_string(),
        target,
        feature_kind: kind,
        n_days: y.len(),
        report,
        model: FittedPredictor::new(target, &names, fit),
    })
}

/// Groups records by segment, each sorted by day.
pub fn records_by_segment(records: &[CongestionRecord]) -> BTreeMap<String, Vec<CongestionRecord>> {
    let mut out: BTreeMap<String, Vec<CongestionRecord>> = BTreeMap::new();
    for r in records {
        out.entry(r.segment_id.clone()).or_default().push(r.clone());
    }
    for v in out.values_mut() {
        v.sort_by_key(|r| r.day);
    }
    out
}

/// ARMA CSTs keyed by segment then day.
pub fn arma_by_segment(
    predictions: &[ArmaCstPrediction],
) -> BTreeMap<String, BTreeMap<NaiveDate, Option<f64>>> {
    let mut out: BTreeMap<String, BTreeMap<NaiveDate, Option<f64>>> = BTreeMap::new();
    for p in predictions {
        out.entry(p.segment_id.clone())
            .or_default()
            .insert(p.day, p.cst);
    }
    out
}

/// One row of the method comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub segment_id: String,
    pub method: String,
    pub rmse: Option<f64>,
    pub mae: Option<f64>,
    /// Days the metrics are computed over.
    pub n_days: usize,
    /// Fraction of the segment's days on which ARMA produced a CST.
    pub arma_coverage: f64,
}

pub const COMPARISON_HEADER: [&str; 6] = [
    "segment_id",
    "method",
    "rmse_hours",
    "mae_hours",
    "n_days",
    "arma_coverage",
];

fn metric_row(
    segment_id: &str,
    method: &str,
    pairs: &[(f64, f64)],
    arma_coverage: f64,
) -> Result<ComparisonRow> {
    let (pred, actual): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
    let (rmse, mae) = if pairs.is_empty() {
        (None, None)
    } else {
        (Some(rmse(&pred, &actual)?), Some(mae(&pred, &actual)?))
    };
    Ok(ComparisonRow {
        segment_id: segment_id.to_string(),
        method: method.to_string(),
        rmse,
        mae,
        n_days: pairs.len(),
        arma_coverage,
    })
}

/// Historical-mean CST errors on the congested `days` that have a
/// prediction. `records` is the segment's full history sorted by day.
pub fn historical_mean_row(
    segment_id: &str,
    records: &[CongestionRecord],
    days: &[NaiveDate],
    lookback: usize,
    arma_coverage: f64,
) -> Result<ComparisonRow> {
    let pairs: Vec<(f64, f64)> = records
        .iter()
        .filter(|r| days.contains(&r.day))
        .filter_map(|r| Some((historical_mean_cst(records, r.day, lookback)?, r.cst?)))
        .collect();
    metric_row(segment_id, "historical_mean", &pairs, arma_coverage)
}

/// ARMA CST errors over the congested days on which ARMA produced a CST.
pub fn arma_row(
    segment_id: &str,
    records: &[CongestionRecord],
    arma: &BTreeMap<NaiveDate, Option<f64>>,
    arma_coverage: f64,
) -> Result<ComparisonRow> {
    let pairs: Vec<(f64, f64)> = records
        .iter()
        .filter_map(|r| Some(((*arma.get(&r.day)?)?, r.cst?)))
        .collect();
    metric_row(segment_id, "arma", &pairs, arma_coverage)
}

/// Pooled held-out errors of a feature-set evaluation.
pub fn evaluation_row(eval: &SegmentEvaluation, arma_coverage: f64) -> ComparisonRow {
    ComparisonRow {
        segment_id: eval.segment_id.clone(),
        method: format!("lasso_{}", eval.feature_kind.name()),
        rmse: Some(eval.report.pooled_rmse),
        mae: Some(eval.report.pooled_mae),
        n_days: eval.report.predictions.len(),
        arma_coverage,
    }
}

pub fn write_comparison<W: std::io::Write>(rows: &[ComparisonRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(COMPARISON_HEADER)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.segment_id.clone(),
            r.method.clone(),
            opt(r.rmse),
            opt(r.mae),
            r.n_days.to_string(),
            r.arma_coverage.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("comparison table", e))?;
    Ok(())
}

/// Writes per-day held-out predictions of several evaluations as
/// `segment_id,target,feature_kind,day,fold,actual,predicted`.
pub fn write_evaluation_predictions<W: std::io::Write>(
    evaluations: &[SegmentEvaluation],
    writer: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "segment_id",
        "target",
        "feature_kind",
        "day",
        "fold",
        "actual",
        "predicted",
    ])?;
    for e in evaluations {
        for p in &e.report.predictions {
            w.write_record([
                e.segment_id.clone(),
                e.target.name().to_string(),
                e.feature_kind.name().to_string(),
                p.day.to_string(),
                (p.fold + 1).to_string(),
                p.actual.to_string(),
                p.predicted.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io("predictions", e))?;
    Ok(())
}

/// Held-out errors of one feature set for one electricity window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    /// End of the electricity window, minutes after midnight.
    pub window_end_minute: u32,
    pub segment_id: String,
    pub target: Target,
    pub feature_kind: FeatureKind,
    pub k: usize,
    pub n_days: usize,
    pub pooled_rmse: f64,
    pub pooled_mae: f64,
    pub mean_rmse: f64,
}

pub const SWEEP_HEADER: [&str; 9] = [
    "window_end",
    "segment_id",
    "target",
    "feature_kind",
    "k",
    "n_days",
    "pooled_rmse_hours",
    "pooled_mae_hours",
    "mean_rmse_hours",
];

/// What to evaluate at every window end of a sweep.
pub struct SweepPlan<'a> {
    pub window_ends: &'a [u32],
    pub kmeans: KMeansParams,
    pub kinds: &'a [FeatureKind],
    pub targets: &'a [Target],
    pub protocol: Protocol,
    pub cv: &'a CvConfig,
}

/// Re-clusters the raw panel restricted to each `[grid start, end)` window
/// and evaluates the aggregate or disaggregate features of every segment.
/// `records` holds every segment's records sorted by day.
pub fn window_sweep(
    raw: &ProfilePanel,
    records: &BTreeMap<String, Vec<CongestionRecord>>,
    plan: &SweepPlan<'_>,
) -> Result<Vec<SweepRow>> {
    if let Some(kind) = plan
        .kinds
        .iter()
        .find(|k| !matches!(k, FeatureKind::Aggregate | FeatureKind::Disaggregate))
    {
        return Err(Error::Config(format!(
            "the sweep evaluates aggregate or disaggregate features, not {}",
            kind.name()
        )));
    }
    let start = raw.grid().start_minute();
    let mut rows = Vec::new();
    for &end in plan.window_ends {
        let panel = raw.restrict_window(start, end)?.normalized()?;
        let model = fit_patterns(&panel, &plan.kmeans)?;
        for &kind in plan.kinds {
            let features = build_features(&model.assignment, model.k, kind)?;
            for (segment_id, seg_records) in records {
                let data = SegmentData {
                    segment_id,
                    records: seg_records,
                    arma: None,
                };
                for &target in plan.targets {
                    let eval =
                        evaluate_segment(&features, &data, kind, target, plan.protocol, plan.cv)?;
                    rows.push(SweepRow {
                        window_end_minute: end,
                        segment_id: segment_id.clone(),
                        target,
                        feature_kind: kind,
                        k: model.k,
                        n_days: eval.n_days,
                        pooled_rmse: eval.report.pooled_rmse,
                        pooled_mae: eval.report.pooled_mae,
                        mean_rmse: eval.report.mean_rmse,
                    });
                }
            }
        }
    }
    Ok(rows)
}

pub fn write_sweep<W: std::io::Write>(rows: &[SweepRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(SWEEP_HEADER)?;
    for r in rows {
        w.write_record([
            format_clock(r.window_end_minute),
            r.segment_id.clone(),
            r.target.name().to_string(),
            r.feature_kind.name().to_string(),
            r.k.to_string(),
            r.n_days.to_string(),
            r.pooled_rmse.to_string(),
            r.pooled_mae.to_string(),
            r.mean_rmse.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("sweep table", e))?;
    Ok(())
}

/// The evaluation mode recorded in reports for a protocol.
pub fn mode_of(protocol: Protocol) -> EvaluationMode {
    match protocol {
        Protocol::NestedCv => EvaluationMode::NestedCv,
        Protocol::FixedSplit { .. } => EvaluationMode::FixedSplit,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::{fit_patterns, KMeansParams};
    use crate::congestion::{extract_records, CongestionParams};
    use crate::synth::{generate, match_patterns, ScenarioSpec};

    fn day(i: u64) -> NaiveDate {
        NaiveDate::from_ymd_opt(2014, 6, 2).unwrap() + chrono::Days::new(i)
    }

    fn record(i: u64, cst: Option<f64>) -> CongestionRecord {
        CongestionRecord {
            segment_id: "s".into(),
            day: day(i),
            cst,
            duration: cst.map(|_| 1.0),
            fftt: 60.0,
        }
    }

    #[test]
    fn mixed_window_comes_from_training_rows_only() {
        let source = MixedColumns {
            shares: DMatrix::from_row_slice(4, 1, &[0.1, 0.2, 0.3, 0.4]),
            arma_cst: vec![Some(5.0), None, Some(7.0), Some(9.5)],
            observed_cst: vec![6.0, 7.0, 6.5, 9.0],
        };
        let (train, eval) = source.build(&[0, 1, 2], &[3]).unwrap();
        assert_eq!(train.column(1).as_slice(), &[6.0, 7.0, 7.0]);
        // The eval row's own CST of 9.0 must not widen the window.
        assert_eq!(eval[(0, 1)], 7.0);
    }

    #[test]
    fn cst_column_ignores_eval_targets() {
        let shares = DMatrix::from_fn(24, 2, |i, j| ((i * 7 + j * 3) % 11) as f64 / 11.0);
        let observed: Vec<f64> = (0..24).map(|i| 7.0 + 0.5 * shares[(i, 0)]).collect();
        let cfg = CvConfig::default();
        let train: Vec<usize> = (0..18).collect();
        let eval: Vec<usize> = (18..24).collect();
        let a = CstAugmented {
            shares: shares.clone(),
            observed_cst: observed.clone(),
            cfg: &cfg,
        };
        let mut corrupted = observed.clone();
        for v in &mut corrupted[18..] {
            *v += 100.0;
        }
        let b = CstAugmented {
            shares,
            observed_cst: corrupted,
            cfg: &cfg,
        };
        assert_eq!(
            a.build(&train, &eval).unwrap(),
            b.build(&train, &eval).unwrap()
        );
    }

    #[test]
    fn comparison_rows_use_available_days() {
        let records: Vec<CongestionRecord> = vec![
            record(0, Some(7.0)),
            record(1, Some(8.0)),
            record(2, None),
            record(3, Some(9.0)),
        ];
        let days: Vec<NaiveDate> = (0..4).map(day).collect();
        let hm = historical_mean_row("s", &records, &days, 5, 0.5).unwrap();
        assert_eq!(
            historical_mean_row("s", &records, &days[3..], 5, 0.5)
                .unwrap()
                .n_days,
            1
        );
        // Day 1 predicts 7.0 for 8.0; day 3 predicts 7.5 for 9.0.
        assert_eq!(hm.n_days, 2);
        assert!((hm.mae.unwrap() - 1.25).abs() < 1e-12);
        let arma: BTreeMap<NaiveDate, Option<f64>> =
            [(day(0), Some(7.5)), (day(1), None), (day(3), Some(9.0))]
                .into_iter()
                .collect();
        let row = arma_row("s", &records, &arma, 2.0 / 3.0).unwrap();
        assert_eq!((row.n_days, row.rmse), (2, Some((0.25f64 / 2.0).sqrt())));
        let empty = arma_row("s", &records, &BTreeMap::new(), 0.0).unwrap();
        assert_eq!((empty.n_days, empty.rmse), (0, None));
    }

    #[test]
    fn evaluates_every_feature_kind_on_a_small_scenario() {
        let spec = ScenarioSpec {
            households: 40,
            days: 30,
            seed: 4,
            ..Default::default()
        };
        let data = generate(&spec).unwrap();
        let model =
            fit_patterns(&data.panel.normalized().unwrap(), &KMeansParams::new(10, 4)).unwrap();
        let order = match_patterns(&model.centroids, &data.truth.templates).unwrap();
        let model = model.reorder(&order).unwrap();
        let records = extract_records(&data.travel, &CongestionParams::default()).unwrap();
        let by_segment = records_by_segment(&records);
        let seg = &by_segment["S1"];
        let arma: BTreeMap<NaiveDate, Option<f64>> = seg
            .iter()
            .map(|r| (r.day, r.cst.map(|c| c + 0.1)))
            .collect();
        let data = SegmentData {
            segment_id: "S1",
            records: seg,
            arma: Some(&arma),
        };
        let cfg = CvConfig::default();
        let agg = build_features(&model.assignment, 10, FeatureKind::Aggregate).unwrap();
        let dis = build_features(&model.assignment, 10, FeatureKind::Disaggregate).unwrap();
        for (features, kind, target) in [
            (&agg, FeatureKind::Aggregate, Target::Cst),
            (&dis, FeatureKind::Disaggregate, Target::Cst),
            (&agg, FeatureKind::Mixed, Target::Cst),
            (&agg, FeatureKind::AggregateCst, Target::Duration),
        ] {
            let e =
                evaluate_segment(features, &data, kind, target, Protocol::NestedCv, &cfg).unwrap();
            assert_eq!(e.n_days, 30);
            assert_eq!(e.report.predictions.len(), 30);
            assert!(e.report.audit_checks > 0);
            assert_eq!(e.model.feature_kind, kind);
            assert_eq!(e.model.names.len(), e.model.fit.coefficients.len());
            assert!(e.report.folds.iter().all(|f| f.rmse >= f.mae));
        }
        let mixed = evaluate_segment(
            &agg,
            &data,
            FeatureKind::Mixed,
            Target::Cst,
            Protocol::NestedCv,
            &cfg,
        )
        .unwrap();
        assert_eq!(
            mixed.model.names.last().map(String::as_str),
            Some("arma_cst")
        );
        // An ARMA column within 0.1 h of the truth makes the mixed model accurate.
        assert!(
            mixed.report.pooled_rmse < 0.15,
            "{}",
            mixed.report.pooled_rmse
        );
        let split = Protocol::FixedSplit { train_days: 20 };
        let fixed = evaluate_segment(
            &agg,
            &data,
            FeatureKind::Aggregate,
            Target::Cst,
            split,
            &cfg,
        )
        .unwrap();
        assert_eq!(fixed.report.predictions.len(), 10);
        assert!(evaluate_segment(
            &dis,
            &data,
            FeatureKind::Aggregate,
            Target::Cst,
            split,
            &cfg
        )
        .is_err());
    }
}
