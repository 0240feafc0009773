use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MINUTES_PER_DAY: u32 = 24 * 60;

/// A regular time-of-day grid. Interval `i` covers
/// `[start + i*interval, start + (i+1)*interval)` and is labelled by its start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TimeGrid {
    interval_minutes: u32,
    start_minute: u32,
    count: usize,
}

impl TimeGrid {
    pub fn new(interval_minutes: u32, start_minute: u32, end_minute: u32) -> Result<Self> {
        if interval_minutes == 0 || 60 % interval_minutes != 0 {
            return Err(Error::Grid(format!(
                "interval of {interval_minutes} min does not divide 60"
            )));
        }
        if end_minute <= start_minute || end_minute > MINUTES_PER_DAY {
            return Err(Error::Grid(format!(
                "window {}..{} is empty or exceeds the day",
                format_clock(start_minute),
                format_clock(end_minute)
            )));
        }
        let span = end_minute - start_minute;
        if !span.is_multiple_of(interval_minutes) || !start_minute.is_multiple_of(interval_minutes)
        {
            return Err(Error::Grid(format!(
                "window {}..{} is not aligned to {interval_minutes}-min intervals",
                format_clock(start_minute),
                format_clock(end_minute)
            )));
        }
        Ok(TimeGrid {
            interval_minutes,
            start_minute,
            count: (span / interval_minutes) as usize,
        })
    }

    /// Grid parsed from `HH:MM` clock strings; `24:00` is accepted as an end.
    pub fn from_clock(interval_minutes: u32, start: &str, end: &str) -> Result<Self> {
        Self::new(interval_minutes, parse_clock(start)?, parse_clock(end)?)
    }

    pub fn full_day(interval_minutes: u32) -> Result<Self> {
        Self::new(interval_minutes, 0, MINUTES_PER_DAY)
    }

    pub fn interval_minutes(&self) -> u32 {
        self.interval_minutes
    }

    pub fn start_minute(&self) -> u32 {
        self.start_minute
    }

    pub fn end_minute(&self) -> u32 {
        self.start_minute + self.count as u32 * self.interval_minutes
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn contains_minute(&self, minute: u32) -> bool {
        minute >= self.start_minute && minute < self.end_minute()
    }

    /// Index of the interval starting exactly at `minute`, if any.
    pub fn index_of_minute(&self, minute: u32) -> Option<usize> {
        if !self.contains_minute(minute) {
            return None;
        }
        let offset = minute - self.start_minute;
        offset
            .is_multiple_of(self.interval_minutes)
            .then(|| (offset / self.interval_minutes) as usize)
    }

    /// First interval index whose start is at or after `minute` (may equal `len()`).
    pub fn first_index_at_or_after(&self, minute: u32) -> usize {
        if minute <= self.start_minute {
            return 0;
        }
        let offset = minute - self.start_minute;
        (offset.div_ceil(self.interval_minutes) as usize).min(self.count)
    }

    pub fn minute_of(&self, index: usize) -> u32 {
        self.start_minute + index as u32 * self.interval_minutes
    }

    pub fn hours_of(&self, index: usize) -> f64 {
        self.minute_of(index) as f64 / 60.0
    }

    pub fn interval_hours(&self) -> f64 {
        self.interval_minutes as f64 / 60.0
    }

    pub fn end_hours(&self) -> f64 {
        self.end_minute() as f64 / 60.0
    }

    /// Sub-grid covering `[start_minute, end_minute)` and the index range it
    /// occupies in `self`.
    pub fn sub_window(
        &self,
        start_minute: u32,
        end_minute: u32,
    ) -> Result<(TimeGrid, Range<usize>)> {
        let sub = TimeGrid::new(self.interval_minutes, start_minute, end_minute)?;
        if start_minute < self.start_minute || sub.end_minute() > self.end_minute() {
            return Err(Error::Grid(format!(
                "window {}..{} lies outside grid {}..{}",
                format_clock(start_minute),
                format_clock(end_minute),
                format_clock(self.start_minute),
                format_clock(self.end_minute())
            )));
        }
        let first = ((start_minute - self.start_minute) / self.interval_minutes) as usize;
        Ok((sub, first..first + sub.len()))
    }
}

/// Parses `HH:MM` into minutes after midnight. `24:00` is allowed.
pub fn parse_clock(s: &str) -> Result<u32> {
    let bad = || Error::Grid(format!("invalid clock time {s:?} (expected HH:MM)"));
    let (h, m) = s.trim().split_once(':').ok_or_else(bad)?;
    let h: u32 = h.parse().map_err(|_| bad())?;
    let m: u32 = m.parse().map_err(|_| bad())?;
    if m >= 60 || h > 24 || (h == 24 && m != 0) {
        return Err(bad());
    }
    Ok(h * 60 + m)
}

pub fn format_clock(minute: u32) -> String {
    format!("{:02}:{:02}", minute / 60, minute % 60)
}
