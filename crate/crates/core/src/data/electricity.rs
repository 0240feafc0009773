//! Electricity CSV ingestion (`household_id,timestamp,kwh`).

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{NaiveDate, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

use super::grid::TimeGrid;
use super::profile::{DailyProfile, ProfilePanel};
use crate::error::{Error, Result};

pub const ELECTRICITY_HEADER: [&str; 3] = ["household_id", "timestamp", "kwh"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedHousehold {
    pub household_id: String,
    pub reason: String,
    pub missing_days: Vec<NaiveDate>,
}

/// Record of what ingestion kept and dropped.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub rows_read: u64,
    pub rows_outside_window: u64,
    pub retained_households: Vec<String>,
    pub dropped_households: Vec<DroppedHousehold>,
    pub days: Vec<NaiveDate>,
    pub dropped_days: Vec<NaiveDate>,
    pub all_zero_profiles: Vec<(String, NaiveDate)>,
    pub warnings: Vec<String>,
}

pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    const FORMATS: [&str; 4] = [
        "%Y-%m-%dT%H:%M:%S",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%d %H:%M:%S",
        "%Y-%m-%d %H:%M",
    ];
    let s = s.trim();
    FORMATS
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
}

pub fn format_timestamp(day: NaiveDate, minute: u32) -> String {
    format!("{}T{:02}:{:02}", day, minute / 60, minute % 60)
}

pub(crate) fn minute_of_day(ts: &NaiveDateTime) -> u32 {
    ts.hour() * 60 + ts.minute()
}

pub fn load_electricity_csv(
    path: impl AsRef<Path>,
    grid: TimeGrid,
) -> Result<(ProfilePanel, IngestReport)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_electricity(file, grid)
}

/// Reads electricity rows into a panel of raw profiles on `grid`.
///
/// Rows outside the grid window are discarded. Households that are not
/// observed on every day present in the file are dropped and listed in the
/// report; a retained household with missing intervals is a gap error.
pub fn read_electricity<R: Read>(
    reader: R,
    grid: TimeGrid,
) -> Result<(ProfilePanel, IngestReport)> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    check_header(rdr.headers()?, &ELECTRICITY_HEADER)?;

    let mut report = IngestReport::default();
    let mut cells: BTreeMap<String, BTreeMap<NaiveDate, Vec<Option<f64>>>> = BTreeMap::new();
    let mut all_days = BTreeSet::new();

    let mut record = csv::StringRecord::new();
    while rdr.read_record(&mut record)? {
        let line = record.position().map_or(0, |p| p.line());
        report.rows_read += 1;
        if record.len() != 3 {
            return Err(Error::parse(
                line,
                format!("expected 3 fields, found {}", record.len()),
            ));
        }
        let household = &record[0];
        if household.is_empty() {
            return Err(Error::parse(line, "empty household_id"));
        }
        let ts = parse_timestamp(&record[1])
            .ok_or_else(|| Error::parse(line, format!("invalid timestamp {:?}", &record[1])))?;
        let kwh: f64 = record[2]
            .parse()
            .map_err(|_| Error::parse(line, format!("invalid kWh value {:?}", &record[2])))?;
        if !kwh.is_finite() || kwh < 0.0 {
            return Err(Error::parse(
                line,
                format!("kWh must be finite and non-negative, got {kwh}"),
            ));
        }
        let minute = minute_of_day(&ts);
        if ts.second() != 0 || !grid.contains_minute(minute) {
            report.rows_outside_window += 1;
            continue;
        }
        let index = grid.index_of_minute(minute).ok_or_else(|| {
            Error::parse(
                line,
                format!(
                    "timestamp {ts} is not aligned to {}-min intervals",
                    grid.interval_minutes()
                ),
            )
        })?;
        let day = ts.date();
        all_days.insert(day);
        let slots = cells
            .entry(household.to_string())
            .or_default()
            .entry(day)
            .or_insert_with(|| vec![None; grid.len()]);
        if slots[index].replace(kwh).is_some() {
            return Err(Error::parse(
                line,
                format!("duplicate reading for ({household}, {ts})"),
            ));
        }
    }

    let days: Vec<NaiveDate> = all_days.into_iter().collect();
    let mut gaps = Vec::new();
    let mut households = Vec::new();
    let mut profiles = Vec::new();
    for (household, by_day) in cells {
        let missing: Vec<NaiveDate> = days
            .iter()
            .copied()
            .filter(|d| !by_day.contains_key(d))
            .collect();
        if !missing.is_empty() {
            report.warnings.push(format!(
                "dropped household {household}: missing {} of {} days",
                missing.len(),
                days.len()
            ));
            report.dropped_households.push(DroppedHousehold {
                household_id: household,
                reason: "not observed on every day".into(),
                missing_days: missing,
            });
            continue;
        }
        for (day, slots) in by_day {
            if slots.iter().any(Option::is_none) {
                gaps.push((household.clone(), day));
                continue;
            }
            let profile = DailyProfile::raw(
                household.clone(),
                day,
                slots.into_iter().flatten().collect(),
            );
            if profile.all_zero {
                report.all_zero_profiles.push((household.clone(), day));
            }
            profiles.push(profile);
        }
        households.push(household);
    }
    if !gaps.is_empty() {
        return Err(Error::Gap(gaps));
    }
    if households.is_empty() {
        return Err(Error::EmptyPanel);
    }
    report.retained_households = households.clone();
    report.days = days.clone();
    let panel = ProfilePanel::new(grid, households, days, profiles)?;
    Ok((panel, report))
}

pub(crate) fn check_header(headers: &csv::StringRecord, expected: &[&str]) -> Result<()> {
    let found: Vec<&str> = headers.iter().collect();
    if found != expected {
        return Err(Error::parse(
            1,
            format!(
                "expected header {:?}, found {:?}",
                expected.join(","),
                found.join(",")
            ),
        ));
    }
    Ok(())
}

/// Writes a panel in the electricity CSV schema. Values use the shortest
/// representation that parses back to the same `f64`.
pub fn write_electricity<W: Write>(panel: &ProfilePanel, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(ELECTRICITY_HEADER)?;
    let grid = panel.grid();
    for p in panel.profiles() {
        for (t, v) in p.values.iter().enumerate() {
            w.write_record([
                p.household_id.as_str(),
                &format_timestamp(p.day, grid.minute_of(t)),
                &v.to_string(),
            ])?;
        }
    }
    w.flush()
        .map_err(|e| Error::io("<electricity writer>", e))?;
    Ok(())
}

pub fn write_electricity_csv(panel: &ProfilePanel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_electricity(panel, std::io::BufWriter::new(file))
}
