//! One function per subcommand. Each reads its inputs from the configured
//! paths or from upstream artifacts in the output directory.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use loadcast::baselines::{
    arma_coverage, historical_mean_cst, predict_cst_arma_all, write_baseline_predictions,
    BaselinePrediction,
};
use loadcast::clustering::{
    clustering_points, fit_patterns, gap_select_k, read_pattern_model, seasonal_split,
    write_pattern_model, GapParams,
};
use loadcast::congestion::{extract_records, read_records_csv, write_records_csv};
use loadcast::data::{
    filter_calendar, load_electricity_csv, load_travel_time_csv_on, parse_clock,
    write_electricity_csv, write_travel_time, ProfilePanel, TimeGrid,
};
use loadcast::features::{read_features_csv, write_features_csv, FeatureKind, FeatureMatrix};
use loadcast::pipeline::{
    arma_by_segment, arma_row, build_features, evaluate_segment, evaluation_row,
    historical_mean_row, records_by_segment, window_sweep, write_comparison,
    write_evaluation_predictions, write_sweep, ComparisonRow, SegmentData, SegmentEvaluation,
    SweepPlan,
};
use loadcast::regression::{fit_lasso, FittedPredictor, Target};
use loadcast::similarity::{pairwise_similarity, selection_profile, write_matrix_csv};
use loadcast::synth::generate;
use loadcast::{Error, Result};
use log::{info, warn};
use serde::Serialize;

use crate::config::PipelineConfig;
use crate::manifest::Recorder;

pub const PANEL_FILE: &str = "panel.csv";
pub const INGEST_REPORT_FILE: &str = "ingest_report.json";
pub const PATTERN_MODEL_FILE: &str = "pattern_model.json";
pub const ASSIGNMENTS_FILE: &str = "assignments.csv";
pub const CONGESTION_FILE: &str = "congestion.csv";
pub const EVALUATION_FILE: &str = "evaluation.json";
pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const MODELS_DIR: &str = "models";
pub const COMPARISON_FILE: &str = "comparison.csv";
pub const SWEEP_FILE: &str = "sweep.csv";

pub fn features_file(kind: FeatureKind) -> String {
    format!("features_{}.csv", kind.name())
}

/// Segment ids restricted to characters that are safe in file names.
fn file_safe(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') {
                c
            } else {
                '_'
            }
        })
        .collect()
}

pub fn model_file(target: Target, kind: FeatureKind, segment: &str) -> String {
    format!(
        "{}_{}_{}.json",
        target.name(),
        kind.name(),
        file_safe(segment)
    )
}

fn require(path: PathBuf, producer: &str) -> Result<PathBuf> {
    if path.exists() {
        Ok(path)
    } else {
        Err(Error::MissingArtifact {
            path,
            producer: producer.to_string(),
        })
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).map_err(|e| Error::io(path, e))?,
    ))
}

fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

pub fn synth(cfg: &PipelineConfig, rec: &mut Recorder) -> Result<()> {
    let data = generate(&cfg.synth)?;
    let electricity = cfg.electricity_path();
    let travel = cfg.travel_path();
    for p in [&electricity, &travel] {
        if let Some(parent) = p.parent().filter(|p| !p.as_os_str().is_empty()) {
            ensure_dir(parent)?;
        }
    }
    write_electricity_csv(&data.panel, &electricity)?;
    rec.record(electricity);
    write_travel_time(&data.travel, create(&travel)?)?;
    rec.record(travel);
    rec.write_json(rec.dir().join("ground_truth.json"), &data.truth)?;
    info!(
        "generated {} households x {} days and {} travel-time series",
        data.panel.n_households(),
        data.panel.n_days(),
        data.travel.len()
    );
    Ok(())
}

#[derive(Serialize)]
struct IngestSummary<'a> {
    report: &'a loadcast::data::IngestReport,
    analysis_days: &'a [NaiveDate],
    households: usize,
    season_split: Option<loadcast::clustering::SeasonSplit>,
}

/// Reads the electricity file on `grid` and applies the calendar filters.
fn ingest_panel(
    cfg: &PipelineConfig,
    grid: TimeGrid,
) -> Result<(
    ProfilePanel,
    loadcast::data::IngestReport,
    Option<loadcast::clustering::SeasonSplit>,
)> {
    let (panel, report) = load_electricity_csv(cfg.electricity_path(), grid)?;
    for w in &report.warnings {
        warn!("{w}");
    }
    let mut panel = filter_calendar(&panel, &cfg.calendar.weekdays, cfg.day_range())?;
    let mut split = None;
    if let Some(season) = cfg.calendar.season {
        let s = seasonal_split(&panel.normalized()?, cfg.seed)?;
        panel = panel.retain_days(|d| s.seasons.get(&d) == Some(&season))?;
        split = Some(s);
    }
    Ok((panel, report, split))
}

pub fn ingest(cfg: &PipelineConfig, rec: &mut Recorder) -> Result<()> {
    let (panel, report, season_split) = ingest_panel(cfg, cfg.profile_grid()?)?;
    let path = rec.dir().join(PANEL_FILE);
    write_electricity_csv(&panel, &path)?;
    rec.record(path);
    rec.write_json(
        rec.dir().join(INGEST_REPORT_FILE),
        &IngestSummary {
            report: &report,
            analysis_days: panel.days(),
            households: panel.n_households(),
            season_split,
        },
    )?;
    info!(
        "kept {} households over {} analysis days",
        panel.n_households(),
        panel.n_days()
    );
    Ok(())
}

pub fn cluster(cfg: &PipelineConfig, rec: &mut Recorder) -> Result<()> {
    let grid = cfg.profile_grid()?;
    let path = require(rec.dir().join(PANEL_FILE), "ingest")?;
    let (panel, _) = load_electricity_csv(path, grid)?;
    let panel = panel.normalized()?;
    let k = if cfg.clustering.gap {
        let candidates: Vec<usize> =
            (cfg.clustering.gap_k_min..=cfg.clustering.gap_k_max).collect();
        let params = GapParams {
            b: cfg.clustering.gap_references,
            restarts: cfg.clustering.restarts,
            max_iters: cfg.clustering.max_iters,
            tol: cfg.clustering.tol,
            seed: cfg.seed,
        };
        let selection = gap_select_k(&clustering_points(&panel)?, &candidates, &params)?;
        for w in &selection.warnings {
            warn!("{w}");
        }
        rec.write_json(rec.dir().join("gap.json"), &selection)?;
        selection.chosen_k
    } else {
        cfg.clustering.k
    };
    let model = fit_patterns(&panel, &cfg.kmeans(k))?;
    write_pattern_model(&model, rec.dir())?;
    rec.stamp_json(rec.dir().join(PATTERN_MODEL_FILE))?;
    rec.record(rec.dir().join(ASSIGNMENTS_FILE));
    info!("clustered into {k} patterns, inertia {:.4}", model.inertia);
    Ok(())
}

#[derive(Serialize)]
struct SegmentSummary {
    segment_id: String,
    fftt_s: f64,
    days: usize,
    congested_days: usize,
}

fn travel_grid(cfg: &PipelineConfig) -> Result<TimeGrid> {
    TimeGrid::full_day(cfg.grid.interval_minutes)
}

pub fn extract(cfg: &PipelineConfig, rec: &mut Recorder) -> Result<()> {
    let series = load_travel_time_csv_on(cfg.travel_path(), travel_grid(cfg)?)?;
    let records = extract_records(&series, &cfg.congestion_params()?)?;
    let path = rec.dir().join(CONGESTION_FILE);
    write_records_csv(&records, &path)?;
    rec.record(path);
    let summary: Vec<SegmentSummary> = records_by_segment(&records)
        .into_iter()
        .map(|(segment_id, rs)| SegmentSummary {
            segment_id,
            fftt_s: rs[0].fftt,
            days: rs.len(),
            congested_days: rs.iter().filter(|r| r.cst.is_some()).count(),
        })
        .collect();
    rec.write_json(rec.dir().join("extract_summary.json"), &summary)?;
    info!("extracted {} segment-days", records.len());
    Ok(())
}

fn base_kinds(cfg: &PipelineConfig) -> Result<Vec<FeatureKind>> {
    for k in &cfg.features.kinds {
        if !matches!(k, FeatureKind::Aggregate | FeatureKind::Disaggregate) {
            return Err(Error::Config(format!(
                "features.kinds lists {}; only aggregate and disaggregate are written, \
                 mixed is evaluated by `compare` and aggregate_cst by `evaluate`",
                k.name()
            )));
        }
    }
    Ok(cfg.features.kinds.clone())
}

pub fn features(cfg: &PipelineConfig, rec: &mut Recorder) -> Result<()> {
    require(rec.dir().join(PATTERN_MODEL_FILE), "cluster")?;
    let model = read_pattern_model(rec.dir())?;
    for kind in base_kinds(cfg)? {
        let m = build_features(&model.assignment, model.k, kind)?;
        let path = rec.dir().join(features_file(kind));
        write_features_csv(&m, &path)?;
        rec.record(path);
        info!(
            "{} features: {} days x {} columns",
            kind.name(),
            m.n_rows(),
            m.n_features()
        );
    }
    Ok(())
}

fn load_features(dir: &Path, kind: FeatureKind) -> Result<FeatureMatrix> {
    read_features_csv(require(dir.join(features_file(kind)), "features")?, kind)
}

fn load_records(
    dir: &Path,
) -> Result<BTreeMap<String, Vec<loadcast::congestion::CongestionRecord>>> {
    Ok(records_by_segment(&read_records_csv(require(
        dir.join(CONGESTION_FILE),
        "extract",
    )?)?))
}

#[derive(Serialize)]
struct EvaluationSummary<'a> {
    evaluations: &'a [SegmentEvaluation],
}

fn write_evaluations(
    rec: &mut Recorder,
    evaluations: &[SegmentEvaluation],
    json_name: &str,
    predictions_name: &str,
) -> Result<()> {
    let models = rec.dir().join(MODELS_DIR);
    ensure_dir(&models)?;
    for e in evaluations {
        let path = models.join(model_file(e.target, e.feature_kind, &e.segment_id));
        rec.write_json(path, &e.model)?;
    }
    let path = rec.dir().join(predictions_name);
    write_evaluation_predictions(evaluations, create(&path)?)?;
    rec.record(path);
    rec.write_json(
        rec.dir().join(json_name),
        &EvaluationSummary { evaluations },
    )
}

pub fn evaluate(cfg: &PipelineConfig, rec: &mut Recorder) -> Result<()> {
    let records = load_records(rec.dir())?;
    let cv = cfg.cv();
    let mut matrices = Vec::new();
    for kind in base_kinds(cfg)? {
        matrices.push((kind, load_features(rec.dir(), kind)?));
    }
    let aggregate = matrices
        .iter()
        .find(|(k, _)| *k == FeatureKind::Aggregate)
        .map(|(_, m)| m);
    let mut tasks: Vec<(&FeatureMatrix, FeatureKind, Target)> = Vec::new();
    for &target in &cfg.evaluation.targets {
        for (kind, m) in &matrices {
            tasks.push((m, *kind, target));
        }
        if target == Target::Duration && cfg.evaluation.duration_with_cst {
            let m = aggregate.ok_or_else(|| {
                Error::Config("duration_with_cst needs aggregate in features.kinds".into())
            })?;
            tasks.push((m, FeatureKind::AggregateCst, target));
        }
    }
    let mut evaluations = Vec::new();
    for (segment_id, seg) in &records {
        let data = SegmentData {
            segment_id,
            records: seg,
            arma: None,
        };
        for &(m, kind, target) in &tasks {
            let e = evaluate_segment(m, &data, kind, target, cfg.evaluation.protocol, &cv)?;
            info!(
                "{segment_id} {} {}: pooled RMSE {:.4} h over {} days",
                target.name(),
                kind.name(),
                e.report.pooled_rmse,
                e.n_days
            );
            evaluations.push(e);
        }
    }
    write_evaluations(rec, &evaluations, EVALUATION_FILE, PREDICTIONS_FILE)
}

#[derive(Serialize)]
struct ComparisonSummary<'a> {
    rows: &'a [ComparisonRow],
    arma_orders: BTreeMap<String, BTreeMap<String, usize>>,
}

pub fn compare(cfg: &PipelineConfig, rec: &mut Recorder) -> Result<()> {
    let records = load_records(rec.dir())?;
    let aggregate = load_features(rec.dir(), FeatureKind::Aggregate)?;
    let evaluation_path = require(rec.dir().join(EVALUATION_FILE), "evaluate")?;
    let text =
        std::fs::read_to_string(&evaluation_path).map_err(|e| Error::io(&evaluation_path, e))?;
    let stored: serde_json::Value = serde_json::from_str(&text)?;
    let evaluations: Vec<SegmentEvaluation> =
        serde_json::from_value(stored["evaluations"].clone())?;

    let days: BTreeSet<NaiveDate> = aggregate.days.iter().copied().collect();
    let series: Vec<_> = load_travel_time_csv_on(cfg.travel_path(), travel_grid(cfg)?)?
        .into_iter()
        .filter(|s| days.contains(&s.day) && records.contains_key(&s.segment_id))
        .collect();
    let fftt: BTreeMap<String, f64> = records
        .iter()
        .map(|(s, rs)| (s.clone(), rs[0].fftt))
        .collect();
    let arma = predict_cst_arma_all(&series, &fftt, &cfg.arma()?, &cfg.congestion_params()?)?;
    let arma_map = arma_by_segment(&arma);

    let mut rows = Vec::new();
    let mut baseline = Vec::new();
    let mut mixed = Vec::new();
    let mut arma_orders: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
    let cv = cfg.cv();
    let empty = BTreeMap::new();
    for (segment_id, seg) in &records {
        let seg_arma: Vec<_> = arma
            .iter()
            .filter(|p| &p.segment_id == segment_id)
            .cloned()
            .collect();
        for p in &seg_arma {
            let key = p
                .order
                .map(|(p, q)| format!("({p},{q})"))
                .unwrap_or_else(|| "none".into());
            *arma_orders
                .entry(segment_id.clone())
                .or_default()
                .entry(key)
                .or_default() += 1;
        }
        let coverage = arma_coverage(&seg_arma);
        let seg_arma_map = arma_map.get(segment_id).unwrap_or(&empty);
        let analysis: Vec<NaiveDate> = seg
            .iter()
            .map(|r| r.day)
            .filter(|d| days.contains(d))
            .collect();
        for r in seg.iter().filter(|r| days.contains(&r.day)) {
            baseline.push(BaselinePrediction {
                segment_id: segment_id.clone(),
                day: r.day,
                method: "historical_mean".into(),
                predicted_cst: historical_mean_cst(seg, r.day, cfg.baselines.lookback),
            });
            baseline.push(BaselinePrediction {
                segment_id: segment_id.clone(),
                day: r.day,
                method: "arma".into(),
                predicted_cst: seg_arma_map.get(&r.day).copied().flatten(),
            });
        }
        rows.push(historical_mean_row(
            segment_id,
            seg,
            &analysis,
            cfg.baselines.lookback,
            coverage,
        )?);
        rows.push(arma_row(segment_id, seg, seg_arma_map, coverage)?);
        for e in evaluations
            .iter()
            .filter(|e| &e.segment_id == segment_id && e.target == Target::Cst)
        {
            rows.push(evaluation_row(e, coverage));
        }
        let data = SegmentData {
            segment_id,
            records: seg,
            arma: Some(seg_arma_map),
        };
        let e = evaluate_segment(
            &aggregate,
            &data,
            FeatureKind::Mixed,
            Target::Cst,
            cfg.evaluation.protocol,
            &cv,
        )?;
        rows.push(evaluation_row(&e, coverage));
        info!(
            "{segment_id}: ARMA coverage {coverage:.3}, mixed pooled RMSE {:.4} h",
            e.report.pooled_rmse
        );
        mixed.push(e);
    }
    let path = rec.dir().join("baseline_predictions.csv");
    write_baseline_predictions(&baseline, create(&path)?)?;
    rec.record(path);
    let path = rec.dir().join(COMPARISON_FILE);
    write_comparison(&rows, create(&path)?)?;
    rec.record(path);
    rec.write_json(
        rec.dir().join("comparison.json"),
        &ComparisonSummary {
            rows: &rows,
            arma_orders,
        },
    )?;
    write_evaluations(
        rec,
        &mixed,
        "evaluation_mixed.json",
        "predictions_mixed.csv",
    )
}

#[derive(Serialize)]
struct SimilaritySummary {
    alpha: Option<f64>,
    threshold: f64,
    profiles: Vec<loadcast::similarity::SelectionProfile>,
    matrices: loadcast::similarity::SimilarityMatrices,
}

pub fn similarity(cfg: &PipelineConfig, rec: &mut Recorder) -> Result<()> {
    let records = load_records(rec.dir())?;
    require(rec.dir().join(PATTERN_MODEL_FILE), "cluster")?;
    let k = read_pattern_model(rec.dir())?.k;
    let features = load_features(rec.dir(), FeatureKind::Disaggregate)?;
    let cv = cfg.cv();
    let mut profiles = Vec::new();
    for (segment_id, seg) in &records {
        let predictor = match cfg.similarity.alpha {
            Some(alpha) => {
                let (x, y, _) = loadcast::features::align_targets(&features, seg, Target::Cst)?;
                FittedPredictor::new(Target::Cst, &x, fit_lasso(&x.values, &y, alpha, &cv.lasso)?)
            }
            None => {
                let path = rec.dir().join(MODELS_DIR).join(model_file(
                    Target::Cst,
                    FeatureKind::Disaggregate,
                    segment_id,
                ));
                FittedPredictor::read_json(require(path, "evaluate")?)?
            }
        };
        profiles.push(selection_profile(
            segment_id,
            &predictor,
            k,
            cfg.similarity.threshold,
        )?);
    }
    let matrices = pairwise_similarity(&profiles)?;
    for (name, m) in [
        ("similarity_jaccard.csv", &matrices.jaccard),
        ("similarity_cosine.csv", &matrices.cosine),
    ] {
        let path = rec.dir().join(name);
        write_matrix_csv(&matrices.segment_ids, m, &path)?;
        rec.record(path);
    }
    rec.write_json(
        rec.dir().join("similarity.json"),
        &SimilaritySummary {
            alpha: cfg.similarity.alpha,
            threshold: cfg.similarity.threshold,
            profiles,
            matrices,
        },
    )
}

pub fn sweep(cfg: &PipelineConfig, rec: &mut Recorder) -> Result<()> {
    let records = load_records(rec.dir())?;
    let mut ends = cfg
        .sweep
        .window_ends
        .iter()
        .map(|e| parse_clock(e))
        .collect::<Result<Vec<u32>>>()?;
    ends.sort_unstable();
    ends.dedup();
    let last = *ends
        .last()
        .ok_or_else(|| Error::Config("sweep.window_ends is empty".into()))?;
    let start = parse_clock(&cfg.grid.window_start)?;
    let grid = TimeGrid::new(cfg.grid.interval_minutes, start, last)?;
    let (raw, _, _) = ingest_panel(cfg, grid)?;
    let k = if cfg.clustering.gap {
        let path = require(rec.dir().join("gap.json"), "cluster")?;
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let v: serde_json::Value = serde_json::from_str(&text)?;
        v["chosen_k"]
            .as_u64()
            .ok_or_else(|| Error::Config("gap.json has no chosen_k".into()))? as usize
    } else {
        cfg.clustering.k
    };
    let cv = cfg.cv();
    let plan = SweepPlan {
        window_ends: &ends,
        kmeans: cfg.kmeans(k),
        kinds: &cfg.sweep.kinds,
        targets: &cfg.sweep.targets,
        protocol: cfg.evaluation.protocol,
        cv: &cv,
    };
    let rows = window_sweep(&raw, &records, &plan)?;
    let path = rec.dir().join(SWEEP_FILE);
    write_sweep(&rows, create(&path)?)?;
    rec.record(path);
    rec.write_json(rec.dir().join("sweep.json"), &rows)
}
