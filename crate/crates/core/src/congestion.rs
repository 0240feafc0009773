//! Congestion starting time (CST) and duration from travel-time series.
//!
//! A segment is stationarily congested at interval `t` when the travel time
//! is at least `ratio` times the free-flow travel time at `t` and at each of
//! the following `persistence - 1` intervals.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{check_header, format_clock, TimeGrid, TravelTimeSeries};
use crate::error::{Error, Result};

pub const CONGESTION_HEADER: [&str; 5] =
    ["segment_id", "day", "cst_hours", "duration_hours", "fftt_s"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum FfttMode {
    /// Strict minimum over all observed intervals.
    Minimum,
    /// Percentile (0-100) of all observed intervals, linearly interpolated.
    Percentile { percentile: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum MissingPolicy {
    /// A missing interval fails the congestion condition.
    Fail,
    /// Interior gaps of at most `max_gap` intervals are linearly interpolated.
    Interpolate { max_gap: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CongestionParams {
    pub ratio: f64,
    pub persistence: usize,
    /// Morning search window `[start, end)` in minutes after midnight.
    pub window_start_minute: u32,
    pub window_end_minute: u32,
    pub fftt_mode: FfttMode,
    pub missing: MissingPolicy,
}

impl Default for CongestionParams {
    fn default() -> Self {
        CongestionParams {
            ratio: 2.0,
            persistence: 3,
            window_start_minute: 5 * 60,
            window_end_minute: 12 * 60,
            fftt_mode: FfttMode::Minimum,
            missing: MissingPolicy::Fail,
        }
    }
}

impl CongestionParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.ratio > 0.0) || self.persistence == 0 {
            return Err(Error::Config(
                "ratio and persistence must be positive".into(),
            ));
        }
        if self.window_end_minute <= self.window_start_minute {
            return Err(Error::Config(format!(
                "empty congestion window {}..{}",
                format_clock(self.window_start_minute),
                format_clock(self.window_end_minute)
            )));
        }
        if let MissingPolicy::Interpolate { max_gap } = self.missing {
            if max_gap > 2 {
                return Err(Error::Config(format!(
                    "interpolation is limited to gaps of 2 intervals, got {max_gap}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CongestionRecord {
    pub segment_id: String,
    pub day: NaiveDate,
    /// Hours after midnight.
    pub cst: Option<f64>,
    /// Hours.
    pub duration: Option<f64>,
    pub fftt: f64,
}

/// Free-flow travel time of a segment from all of its series.
pub fn free_flow_travel_time(series: &[TravelTimeSeries], mode: FfttMode) -> Result<f64> {
    let mut values: Vec<f64> = series.iter().flat_map(|s| s.observed()).collect();
    if values.is_empty() {
        return Err(Error::NoObservations(
            "no observed travel times for free-flow estimate".into(),
        ));
    }
    match mode {
        FfttMode::Minimum => Ok(values.iter().copied().fold(f64::INFINITY, f64::min)),
        FfttMode::Percentile { percentile } => {
            if !(0.0..=100.0).contains(&percentile) {
                return Err(Error::Config(format!(
                    "percentile must be in [0, 100], got {percentile}"
                )));
            }
            values.sort_by(f64::total_cmp);
            let pos = percentile / 100.0 * (values.len() - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            Ok(values[lo] + (values[hi] - values[lo]) * (pos - lo as f64))
        }
    }
}

/// Applies the missing-data policy.
pub fn effective_times(times: &[Option<f64>], policy: MissingPolicy) -> Vec<Option<f64>> {
    let mut out = times.to_vec();
    let MissingPolicy::Interpolate { max_gap } = policy else {
        return out;
    };
    let mut i = 0;
    while i < times.len() {
        if times[i].is_some() {
            i += 1;
            continue;
        }
        let start = i;
        while i < times.len() && times[i].is_none() {
            i += 1;
        }
        let len = i - start;
        if start == 0 || i == times.len() || len > max_gap {
            continue;
        }
        let (a, b) = (times[start - 1].unwrap(), times[i].unwrap());
        for (k, slot) in out[start..i].iter_mut().enumerate() {
            let w = (k + 1) as f64 / (len + 1) as f64;
            *slot = Some(a + (b - a) * w);
        }
    }
    out
}

fn congested_flags(times: &[Option<f64>], fftt: f64, ratio: f64) -> Vec<bool> {
    times
        .iter()
        .map(|t| t.is_some_and(|r| r / fftt >= ratio))
        .collect()
}

fn run_holds(flags: &[bool], t: usize, persistence: usize, value: bool) -> bool {
    t + persistence <= flags.len() && flags[t..t + persistence].iter().all(|&f| f == value)
}

pub fn is_stationarily_congested(
    series: &TravelTimeSeries,
    t: usize,
    fftt: f64,
    params: &CongestionParams,
) -> Result<bool> {
    if t + params.persistence > series.times.len() {
        return Err(Error::Contract(format!(
            "interval {t} leaves fewer than {} intervals in the day",
            params.persistence
        )));
    }
    let times = effective_times(&series.times, params.missing);
    let flags = congested_flags(&times, fftt, params.ratio);
    Ok(run_holds(&flags, t, params.persistence, true))
}

fn cst_index(grid: &TimeGrid, flags: &[bool], params: &CongestionParams) -> Option<usize> {
    let first = grid.first_index_at_or_after(params.window_start_minute);
    let last = grid.first_index_at_or_after(params.window_end_minute);
    (first..last).find(|&t| run_holds(flags, t, params.persistence, true))
}

fn end_index(flags: &[bool], cst: usize, persistence: usize) -> Option<usize> {
    (cst + 1..flags.len()).find(|&s| run_holds(flags, s, persistence, false))
}

/// CST and duration (hours) of an arbitrary value trajectory on `grid`.
pub fn extract_from_values(
    grid: &TimeGrid,
    times: &[Option<f64>],
    fftt: f64,
    params: &CongestionParams,
) -> Option<(f64, f64)> {
    let times = effective_times(times, params.missing);
    let flags = congested_flags(&times, fftt, params.ratio);
    let start = cst_index(grid, &flags, params)?;
    let end =
        end_index(&flags, start, params.persistence).map_or(grid.end_hours(), |e| grid.hours_of(e));
    Some((grid.hours_of(start), end - grid.hours_of(start)))
}

/// Start time (hours) of the earliest interval in the morning window at which
/// the segment is stationarily congested.
pub fn extract_cst(series: &TravelTimeSeries, fftt: f64, params: &CongestionParams) -> Option<f64> {
    let times = effective_times(&series.times, params.missing);
    let flags = congested_flags(&times, fftt, params.ratio);
    cst_index(&series.grid, &flags, params).map(|i| series.grid.hours_of(i))
}

/// Hours from `cst` until the first run of `persistence` uncongested
/// intervals, or until the end of the day.
pub fn extract_duration(
    series: &TravelTimeSeries,
    fftt: f64,
    cst: f64,
    params: &CongestionParams,
) -> f64 {
    let grid = &series.grid;
    let times = effective_times(&series.times, params.missing);
    let flags = congested_flags(&times, fftt, params.ratio);
    let start = grid.first_index_at_or_after((cst * 60.0).round() as u32);
    let end =
        end_index(&flags, start, params.persistence).map_or(grid.end_hours(), |e| grid.hours_of(e));
    end - cst
}

/// One record per (segment, day), sorted by segment then day. FFTT is
/// estimated per segment over all of its days.
pub fn extract_records(
    series: &[TravelTimeSeries],
    params: &CongestionParams,
) -> Result<Vec<CongestionRecord>> {
    params.validate()?;
    let mut sorted: Vec<&TravelTimeSeries> = series.iter().collect();
    sorted.sort_by(|a, b| (&a.segment_id, a.day).cmp(&(&b.segment_id, b.day)));
    let mut groups: Vec<Vec<TravelTimeSeries>> = Vec::new();
    for s in sorted {
        match groups.last_mut() {
            Some(g) if g[0].segment_id == s.segment_id => g.push(s.clone()),
            _ => groups.push(vec![s.clone()]),
        }
    }
    let per_segment: Vec<Result<Vec<CongestionRecord>>> = groups
        .par_iter()
        .map(|group| {
            let fftt = free_flow_travel_time(group, params.fftt_mode)?;
            Ok(group
                .iter()
                .map(|s| {
                    let found = extract_from_values(&s.grid, &s.times, fftt, params);
                    CongestionRecord {
                        segment_id: s.segment_id.clone(),
                        day: s.day,
                        cst: found.map(|f| f.0),
                        duration: found.map(|f| f.1),
                        fftt,
                    }
                })
                .collect())
        })
        .collect();
    let mut out = Vec::new();
    for r in per_segment {
        out.extend(r?);
    }
    Ok(out)
}

pub fn write_records<W: Write>(records: &[CongestionRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CONGESTION_HEADER)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in records {
        w.write_record([
            r.segment_id.clone(),
            r.day.to_string(),
            opt(r.cst),
            opt(r.duration),
            r.fftt.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<congestion writer>", e))?;
    Ok(())
}

pub fn write_records_csv(records: &[CongestionRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_records(records, std::io::BufWriter::new(file))
}

pub fn read_records<R: Read>(reader: R) -> Result<Vec<CongestionRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    check_header(rdr.headers()?, &CONGESTION_HEADER)?;
    let mut out = Vec::new();
    let mut record = csv::StringRecord::new();
    while rdr.read_record(&mut record)? {
        let line = record.position().map_or(0, |p| p.line());
        let num = |i: usize| -> Result<Option<f64>> {
            if record[i].is_empty() {
                return Ok(None);
            }
            record[i]
                .parse()
                .map(Some)
                .map_err(|_| Error::parse(line, format!("invalid number {:?}", &record[i])))
        };
        let cst = num(2)?;
        let duration = num(3)?;
        if cst.is_some() != duration.is_some() {
            return Err(Error::parse(
                line,
                "cst_hours and duration_hours must both be present or both empty",
            ));
        }
        out.push(CongestionRecord {
            segment_id: record[0].to_string(),
            day: record[1]
                .parse()
                .map_err(|_| Error::parse(line, format!("invalid day {:?}", &record[1])))?,
            cst,
            duration,
            fftt: num(4)?.ok_or_else(|| Error::parse(line, "missing fftt_s"))?,
        });
    }
    Ok(out)
}

pub fn read_records_csv(path: impl AsRef<Path>) -> Result<Vec<CongestionRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_records(file)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn day() -> NaiveDate {
        "2014-06-03".parse().unwrap()
    }

    fn series_from_ratios(fftt: f64, ratios: &[(u32, u32, f64)]) -> TravelTimeSeries {
        // (start minute, end minute, ratio) blocks over a free-flow day.
        let grid = TimeGrid::full_day(5).unwrap();
        let times = (0..grid.len())
            .map(|i| {
                let m = grid.minute_of(i);
                let r = ratios
                    .iter()
                    .find(|(a, b, _)| m >= *a && m < *b)
                    .map_or(1.0, |b| b.2);
                fftt * r
            })
            .collect();
        TravelTimeSeries::complete("s", day(), grid, times)
    }

    fn short_series(ratios: &[f64]) -> TravelTimeSeries {
        let grid = TimeGrid::new(5, 0, 5 * ratios.len() as u32).unwrap();
        TravelTimeSeries::complete("s", day(), grid, ratios.iter().map(|r| r * 100.0).collect())
    }

    #[test]
    fn fftt_minimum_and_percentile() {
        let s = short_series(&[1.2, 0.95, 3.0, 0.95]);
        assert_eq!(
            free_flow_travel_time(&[s], FfttMode::Minimum).unwrap(),
            95.0
        );
        let a = short_series(&[1.0, 1.5]);
        let b = short_series(&[0.9, 1.5]);
        assert_eq!(
            free_flow_travel_time(&[a, b], FfttMode::Minimum).unwrap(),
            90.0
        );
        let grid = TimeGrid::new(5, 0, 505).unwrap();
        let s = TravelTimeSeries::complete("s", day(), grid, (90..=190).map(f64::from).collect());
        assert_eq!(
            free_flow_travel_time(&[s], FfttMode::Percentile { percentile: 5.0 }).unwrap(),
            95.0
        );
        let empty = TravelTimeSeries {
            segment_id: "s".into(),
            day: day(),
            grid,
            times: vec![None; grid.len()],
        };
        assert!(free_flow_travel_time(&[empty], FfttMode::Minimum).is_err());
    }

    #[test]
    fn stationary_congestion_conditions() {
        let p = CongestionParams::default();
        let s = short_series(&[1.1, 2.2, 2.3, 2.4, 1.0]);
        assert!(is_stationarily_congested(&s, 1, 100.0, &p).unwrap());
        let s = short_series(&[2.2, 2.3, 1.9]);
        assert!(!is_stationarily_congested(&s, 0, 100.0, &p).unwrap());
        let s = short_series(&[2.0, 2.0, 2.0]);
        assert!(is_stationarily_congested(&s, 0, 100.0, &p).unwrap());
        assert!(is_stationarily_congested(&s, 1, 100.0, &p).is_err());
    }

    #[test]
    fn missing_value_fails_unless_interpolated() {
        let mut s = short_series(&[2.2, 2.3, 2.4, 2.5]);
        s.times[1] = None;
        let p = CongestionParams::default();
        assert!(!is_stationarily_congested(&s, 0, 100.0, &p).unwrap());
        let interp = CongestionParams {
            missing: MissingPolicy::Interpolate { max_gap: 2 },
            ..p
        };
        assert!(is_stationarily_congested(&s, 0, 100.0, &interp).unwrap());
        s.times[2] = None;
        s.times[3] = None;
        // A trailing gap cannot be interpolated.
        assert!(!is_stationarily_congested(&s, 0, 100.0, &interp).unwrap());
    }

    #[test]
    fn cst_of_single_block() {
        let p = CongestionParams::default();
        let s = series_from_ratios(60.0, &[(400, 475, 2.5)]);
        let cst = extract_cst(&s, 60.0, &p).unwrap();
        assert!((cst - 6.0 - 40.0 / 60.0).abs() < 1e-12);
        // Congested 06:40-07:55, free flow afterwards.
        assert!((extract_duration(&s, 60.0, cst, &p) - 1.25).abs() < 1e-12);
    }

    #[test]
    fn free_flow_morning_has_no_cst() {
        let s = series_from_ratios(60.0, &[(1000, 1100, 3.0)]);
        assert_eq!(extract_cst(&s, 60.0, &CongestionParams::default()), None);
    }

    #[test]
    fn earliest_block_wins() {
        let s = series_from_ratios(60.0, &[(370, 400, 2.5), (480, 540, 2.5)]);
        let cst = extract_cst(&s, 60.0, &CongestionParams::default()).unwrap();
        assert!((cst - (6.0 + 10.0 / 60.0)).abs() < 1e-12);
    }

    #[test]
    fn minimal_block_lasts_a_quarter_hour() {
        let p = CongestionParams::default();
        let s = series_from_ratios(60.0, &[(420, 435, 2.5)]);
        let cst = extract_cst(&s, 60.0, &p).unwrap();
        assert!((extract_duration(&s, 60.0, cst, &p) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn short_dip_does_not_end_congestion() {
        let p = CongestionParams::default();
        // 07:00-08:00 congested with a 5-minute dip at 07:30.
        let s = series_from_ratios(60.0, &[(420, 450, 2.5), (450, 455, 1.2), (455, 480, 2.5)]);
        let cst = extract_cst(&s, 60.0, &p).unwrap();
        assert!((extract_duration(&s, 60.0, cst, &p) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn congestion_until_midnight() {
        let p = CongestionParams::default();
        let s = series_from_ratios(60.0, &[(1380, 1440, 1.0), (600, 1380, 2.5)]);
        let cst = extract_cst(&s, 60.0, &p).unwrap();
        assert_eq!(cst, 10.0);
        assert_eq!(extract_duration(&s, 60.0, cst, &p), 13.0);
        let s = series_from_ratios(60.0, &[(600, 1440, 2.5)]);
        assert_eq!(extract_duration(&s, 60.0, 10.0, &p), 14.0);
    }

    #[test]
    fn records_round_trip() {
        let a = series_from_ratios(60.0, &[(400, 475, 2.5)]);
        let mut b = series_from_ratios(60.0, &[]);
        b.day = "2014-06-04".parse().unwrap();
        let recs = extract_records(&[b, a], &CongestionParams::default()).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].day, day());
        assert!(recs[0].cst.is_some() && recs[1].cst.is_none());
        let mut buf = Vec::new();
        write_records(&recs, &mut buf).unwrap();
        assert_eq!(read_records(buf.as_slice()).unwrap(), recs);
    }

    fn arb_series() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(prop_oneof![3 => 0.9f64..1.9, 2 => 1.9f64..3.5], 288)
    }

    proptest! {
        #[test]
        fn scale_invariance(ratios in arb_series(), scale in 0.01f64..100.0) {
            let p = CongestionParams::default();
            let grid = TimeGrid::full_day(5).unwrap();
            let base = TravelTimeSeries::complete("s", day(), grid, ratios.iter().map(|r| r * 50.0).collect());
            let scaled = TravelTimeSeries::complete("s", day(), grid, ratios.iter().map(|r| r * 50.0 * scale).collect());
            let f0 = free_flow_travel_time(std::slice::from_ref(&base), FfttMode::Minimum).unwrap();
            let f1 = free_flow_travel_time(std::slice::from_ref(&scaled), FfttMode::Minimum).unwrap();
            // Thresholds are compared after division, so use the exact
            // scaled FFTT to avoid boundary rounding.
            let a = extract_from_values(&grid, &base.times, f0, &p);
            let b = extract_from_values(&grid, &scaled.times, f1, &p);
            prop_assume!(ratios.iter().all(|r| ((r * 50.0) / f0 - p.ratio).abs() > 1e-9));
            prop_assert_eq!(a, b);
        }

        #[test]
        fn raising_ratio_never_moves_cst_earlier(ratios in arb_series(), bump in 0.0f64..1.0) {
            let grid = TimeGrid::full_day(5).unwrap();
            let times: Vec<Option<f64>> = ratios.iter().map(|r| Some(r * 50.0)).collect();
            let lo = CongestionParams::default();
            let hi = CongestionParams { ratio: lo.ratio + bump, ..lo };
            if let Some((c_hi, d_hi)) = extract_from_values(&grid, &times, 50.0, &hi) {
                let (c_lo, d_lo) = extract_from_values(&grid, &times, 50.0, &lo).unwrap();
                prop_assert!(c_lo <= c_hi);
                if c_lo == c_hi {
                    prop_assert!(d_hi <= d_lo);
                }
            }
        }

        #[test]
        fn congestion_ends_within_the_day(ratios in arb_series()) {
            let grid = TimeGrid::full_day(5).unwrap();
            let times: Vec<Option<f64>> = ratios.iter().map(|r| Some(r * 50.0)).collect();
            if let Some((c, d)) = extract_from_values(&grid, &times, 50.0, &CongestionParams::default()) {
                prop_assert!(d > 0.0);
                prop_assert!(c + d <= 24.0 + 1e-12);
                prop_assert!((5.0..12.0).contains(&c));
            }
        }
    }
}
