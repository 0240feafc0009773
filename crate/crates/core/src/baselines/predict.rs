use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{Datelike, NaiveDate, Weekday};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::arma::{forecast, min_length, select_order_aic};
use crate::congestion::{extract_from_values, CongestionParams, CongestionRecord};
use crate::data::{check_header, TravelTimeSeries};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmaConfig {
    /// Only travel times observed before this minute of the day are used.
    pub cutoff_minute: u32,
    pub p_max: usize,
    pub q_max: usize,
}

impl Default for ArmaConfig {
    fn default() -> Self {
        ArmaConfig {
            cutoff_minute: 6 * 60,
            p_max: 4,
            q_max: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmaCstPrediction {
    pub segment_id: String,
    pub day: NaiveDate,
    pub cst: Option<f64>,
    pub order: Option<(usize, usize)>,
    /// Why no model was available, when fitting failed.
    pub diagnostic: Option<String>,
}

/// Linear interpolation across interior gaps of `values`.
fn fill_interior(values: &[Option<f64>]) -> Vec<f64> {
    let known: Vec<(usize, f64)> = values
        .iter()
        .enumerate()
        .filter_map(|(i, v)| v.map(|v| (i, v)))
        .collect();
    let mut out = Vec::with_capacity(values.len());
    for w in known.windows(2) {
        let ((i0, v0), (i1, v1)) = (w[0], w[1]);
        for i in i0..i1 {
            out.push(v0 + (v1 - v0) * (i - i0) as f64 / (i1 - i0) as f64);
        }
    }
    if let Some(&(_, v)) = known.last() {
        out.push(v);
    }
    out
}

/// Fits an AIC-selected ARMA model to the day's travel times before the
/// cutoff, forecasts through the end of the congestion window, and reads the
/// CST off the observed-then-forecast trajectory.
pub fn predict_cst_arma(
    series: &TravelTimeSeries,
    fftt: f64,
    cfg: &ArmaConfig,
    params: &CongestionParams,
) -> ArmaCstPrediction {
    let grid = &series.grid;
    let mut out = ArmaCstPrediction {
        segment_id: series.segment_id.clone(),
        day: series.day,
        cst: None,
        order: None,
        diagnostic: None,
    };
    let cut = grid
        .first_index_at_or_after(cfg.cutoff_minute)
        .min(series.times.len());
    let Some(last_obs) = series.times[..cut].iter().rposition(Option::is_some) else {
        out.diagnostic = Some("no observations before cutoff".into());
        return out;
    };
    let history = fill_interior(&series.times[..=last_obs]);
    if history.len() < min_length(0, 0) {
        out.diagnostic = Some(format!("only {} intervals of history", history.len()));
        return out;
    }
    let model = match select_order_aic(&history, cfg.p_max, cfg.q_max) {
        Ok(m) => m,
        Err(e) => {
            out.diagnostic = Some(e.to_string());
            return out;
        }
    };
    out.order = Some((model.p, model.q));
    let end = (grid.first_index_at_or_after(params.window_end_minute) + params.persistence)
        .min(series.times.len());
    let mut trajectory: Vec<Option<f64>> = series.times[..=last_obs].to_vec();
    if end > last_obs + 1 {
        trajectory.extend(
            forecast(&model, &history, end - last_obs - 1)
                .into_iter()
                .map(Some),
        );
    }
    trajectory.resize(series.times.len(), None);
    out.cst = extract_from_values(grid, &trajectory, fftt, params).map(|(cst, _)| cst);
    out
}

/// Per-series ARMA predictions in input order; `fftt` is keyed by segment.
pub fn predict_cst_arma_all(
    series: &[TravelTimeSeries],
    fftt: &BTreeMap<String, f64>,
    cfg: &ArmaConfig,
    params: &CongestionParams,
) -> Result<Vec<ArmaCstPrediction>> {
    series
        .par_iter()
        .map(|s| {
            let f = fftt.get(&s.segment_id).ok_or_else(|| {
                Error::NoObservations(format!("no free-flow time for segment {}", s.segment_id))
            })?;
            Ok(predict_cst_arma(s, *f, cfg, params))
        })
        .collect()
}

/// Fraction of predictions that found a CST.
pub fn arma_coverage(predictions: &[ArmaCstPrediction]) -> f64 {
    if predictions.is_empty() {
        return 0.0;
    }
    predictions.iter().filter(|p| p.cst.is_some()).count() as f64 / predictions.len() as f64
}

fn is_weekday(d: NaiveDate) -> bool {
    !matches!(d.weekday(), Weekday::Sat | Weekday::Sun)
}

/// Mean CST over the `lookback` most recent weekdays before `day` in
/// `records`, skipping those days without congestion. `records` must hold
/// one segment sorted by day.
pub fn historical_mean_cst(
    records: &[CongestionRecord],
    day: NaiveDate,
    lookback: usize,
) -> Option<f64> {
    let prior: Vec<f64> = records
        .iter()
        .rev()
        .filter(|r| r.day < day && is_weekday(r.day))
        .take(lookback)
        .filter_map(|r| r.cst)
        .collect();
    if prior.is_empty() {
        None
    } else {
        Some(prior.iter().sum::<f64>() / prior.len() as f64)
    }
}

pub const BASELINE_HEADER: [&str; 4] = ["segment_id", "day", "method", "predicted_cst_hours"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselinePrediction {
    pub segment_id: String,
    pub day: NaiveDate,
    pub method: String,
    pub predicted_cst: Option<f64>,
}

/// Historical-mean prediction for every record, grouping by segment.
pub fn historical_mean_predictions(
    records: &[CongestionRecord],
    lookback: usize,
) -> Vec<BaselinePrediction> {
    let mut by_segment: BTreeMap<&str, Vec<&CongestionRecord>> = BTreeMap::new();
    for r in records {
        by_segment.entry(&r.segment_id).or_default().push(r);
    }
    let mut out = Vec::with_capacity(records.len());
    for (segment, mut rs) in by_segment {
        rs.sort_by_key(|r| r.day);
        let owned: Vec<CongestionRecord> = rs.iter().map(|r| (*r).clone()).collect();
        for r in &owned {
            out.push(BaselinePrediction {
                segment_id: segment.to_string(),
                day: r.day,
                method: "historical_mean".into(),
                predicted_cst: historical_mean_cst(&owned, r.day, lookback),
            });
        }
    }
    out
}

pub fn write_baseline_predictions<W: Write>(rows: &[BaselinePrediction], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(BASELINE_HEADER)?;
    for r in rows {
        w.write_record([
            r.segment_id.clone(),
            r.day.to_string(),
            r.method.clone(),
            r.predicted_cst.map(|v| v.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()
        .map_err(|e| Error::io("<baseline predictions>", e))?;
    Ok(())
}

pub fn write_baseline_predictions_csv(
    rows: &[BaselinePrediction],
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_baseline_predictions(rows, std::io::BufWriter::new(file))
}

pub fn read_baseline_predictions<R: Read>(reader: R) -> Result<Vec<BaselinePrediction>> {
    let mut r = csv::Reader::from_reader(reader);
    check_header(r.headers()?, &BASELINE_HEADER)?;
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = i as u64 + 2;
        let day = NaiveDate::parse_from_str(&rec[1], "%Y-%m-%d")
            .map_err(|e| Error::parse(line, e.to_string()))?;
        let predicted_cst = match &rec[3] {
            "" => None,
            v => Some(
                v.parse::<f64>()
                    .map_err(|e| Error::parse(line, e.to_string()))?,
            ),
        };
        out.push(BaselinePrediction {
            segment_id: rec[0].to_string(),
            day,
            method: rec[2].to_string(),
            predicted_cst,
        });
    }
    Ok(out)
}

pub fn read_baseline_predictions_csv(path: impl AsRef<Path>) -> Result<Vec<BaselinePrediction>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_baseline_predictions(file)
}
