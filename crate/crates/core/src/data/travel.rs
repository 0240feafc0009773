//! Travel-time CSV ingestion (`segment_id,timestamp,travel_time_s`).

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{NaiveDate, Timelike};
use serde::{Deserialize, Serialize};

use super::electricity::{check_header, format_timestamp, minute_of_day, parse_timestamp};
use super::grid::TimeGrid;
use crate::error::{Error, Result};

pub const TRAVEL_HEADER: [&str; 3] = ["segment_id", "timestamp", "travel_time_s"];

/// Travel times (seconds) of one segment over one day. Missing intervals are
/// `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TravelTimeSeries {
    pub segment_id: String,
    pub day: NaiveDate,
    pub grid: TimeGrid,
    pub times: Vec<Option<f64>>,
}

impl TravelTimeSeries {
    pub fn complete(
        segment_id: impl Into<String>,
        day: NaiveDate,
        grid: TimeGrid,
        times: Vec<f64>,
    ) -> Self {
        assert_eq!(times.len(), grid.len(), "series length must match grid");
        TravelTimeSeries {
            segment_id: segment_id.into(),
            day,
            grid,
            times: times.into_iter().map(Some).collect(),
        }
    }

    pub fn gaps(&self) -> Vec<usize> {
        (0..self.times.len())
            .filter(|&i| self.times[i].is_none())
            .collect()
    }

    pub fn observed(&self) -> impl Iterator<Item = f64> + '_ {
        self.times.iter().flatten().copied()
    }
}

/// Loads travel times on the default 5-minute full-day grid.
pub fn load_travel_time_csv(path: impl AsRef<Path>) -> Result<Vec<TravelTimeSeries>> {
    load_travel_time_csv_on(path, TimeGrid::full_day(5)?)
}

pub fn load_travel_time_csv_on(
    path: impl AsRef<Path>,
    grid: TimeGrid,
) -> Result<Vec<TravelTimeSeries>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_travel_time(file, grid)
}

/// One series per (segment, day), sorted by segment then day.
pub fn read_travel_time<R: Read>(reader: R, grid: TimeGrid) -> Result<Vec<TravelTimeSeries>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    check_header(rdr.headers()?, &TRAVEL_HEADER)?;
    let mut series: BTreeMap<(String, NaiveDate), Vec<Option<f64>>> = BTreeMap::new();
    let mut record = csv::StringRecord::new();
    while rdr.read_record(&mut record)? {
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 3 {
            return Err(Error::parse(
                line,
                format!("expected 3 fields, found {}", record.len()),
            ));
        }
        let segment = &record[0];
        if segment.is_empty() {
            return Err(Error::parse(line, "empty segment_id"));
        }
        let ts = parse_timestamp(&record[1])
            .ok_or_else(|| Error::parse(line, format!("invalid timestamp {:?}", &record[1])))?;
        let tt: f64 = record[2]
            .parse()
            .map_err(|_| Error::parse(line, format!("invalid travel time {:?}", &record[2])))?;
        if !tt.is_finite() || tt <= 0.0 {
            return Err(Error::parse(
                line,
                format!("travel time must be positive, got {tt}"),
            ));
        }
        let index = (ts.second() == 0)
            .then(|| grid.index_of_minute(minute_of_day(&ts)))
            .flatten()
            .ok_or_else(|| {
                Error::parse(
                    line,
                    format!("timestamp {ts} is not on the travel-time grid"),
                )
            })?;
        let slots = series
            .entry((segment.to_string(), ts.date()))
            .or_insert_with(|| vec![None; grid.len()]);
        if slots[index].replace(tt).is_some() {
            return Err(Error::parse(
                line,
                format!("duplicate reading for ({segment}, {ts})"),
            ));
        }
    }
    Ok(series
        .into_iter()
        .map(|((segment_id, day), times)| TravelTimeSeries {
            segment_id,
            day,
            grid,
            times,
        })
        .collect())
}

/// Writes series in the travel-time CSV schema; missing intervals are omitted.
pub fn write_travel_time<W: Write>(series: &[TravelTimeSeries], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(TRAVEL_HEADER)?;
    for s in series {
        for (i, t) in s.times.iter().enumerate() {
            if let Some(t) = t {
                w.write_record([
                    s.segment_id.as_str(),
                    &format_timestamp(s.day, s.grid.minute_of(i)),
                    &t.to_string(),
                ])?;
            }
        }
    }
    w.flush()
        .map_err(|e| Error::io("<travel-time writer>", e))?;
    Ok(())
}
