use std::collections::BTreeSet;
use std::ops::RangeInclusive;

use chrono::{Datelike, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};

use super::grid::TimeGrid;
use crate::error::{Error, Result};

/// One household's electricity use over the analysis window of one day,
/// in kWh per interval (or unit-norm after [`normalize_profile`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyProfile {
    pub household_id: String,
    pub day: NaiveDate,
    pub values: Vec<f64>,
    pub normalized: bool,
    /// Set when the raw profile was identically zero; such profiles cannot be
    /// scaled to unit norm and are left out of clustering.
    pub all_zero: bool,
}

impl DailyProfile {
    pub fn raw(household_id: impl Into<String>, day: NaiveDate, values: Vec<f64>) -> Self {
        let all_zero = values.iter().all(|&v| v == 0.0);
        DailyProfile {
            household_id: household_id.into(),
            day,
            values,
            normalized: false,
            all_zero,
        }
    }
}

/// Scales a raw profile so that its squared values sum to one.
pub fn normalize_profile(p: &DailyProfile) -> Result<DailyProfile> {
    if p.normalized {
        return Err(Error::Contract(format!(
            "profile ({}, {}) is already normalized",
            p.household_id, p.day
        )));
    }
    let norm = p.values.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut out = p.clone();
    out.normalized = true;
    if norm == 0.0 {
        out.all_zero = true;
    } else {
        out.values.iter_mut().for_each(|v| *v /= norm);
        out.all_zero = false;
    }
    Ok(out)
}

/// The H x D grid of daily profiles. Profiles are stored household-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfilePanel {
    grid: TimeGrid,
    households: Vec<String>,
    days: Vec<NaiveDate>,
    profiles: Vec<DailyProfile>,
}

impl ProfilePanel {
    pub fn new(
        grid: TimeGrid,
        households: Vec<String>,
        days: Vec<NaiveDate>,
        profiles: Vec<DailyProfile>,
    ) -> Result<Self> {
        let expected = households.len() * days.len();
        if profiles.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                actual: profiles.len(),
            });
        }
        for (i, p) in profiles.iter().enumerate() {
            let (h, d) = (i / days.len(), i % days.len());
            if p.household_id != households[h] || p.day != days[d] {
                return Err(Error::Contract(format!(
                    "profile at cell ({h}, {d}) is ({}, {}), expected ({}, {})",
                    p.household_id, p.day, households[h], days[d]
                )));
            }
            if p.values.len() != grid.len() {
                return Err(Error::LengthMismatch {
                    expected: grid.len(),
                    actual: p.values.len(),
                });
            }
        }
        Ok(ProfilePanel {
            grid,
            households,
            days,
            profiles,
        })
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn households(&self) -> &[String] {
        &self.households
    }

    pub fn days(&self) -> &[NaiveDate] {
        &self.days
    }

    pub fn n_households(&self) -> usize {
        self.households.len()
    }

    pub fn n_days(&self) -> usize {
        self.days.len()
    }

    pub fn profile(&self, h: usize, d: usize) -> &DailyProfile {
        &self.profiles[h * self.days.len() + d]
    }

    /// All profiles, household-major.
    pub fn profiles(&self) -> &[DailyProfile] {
        &self.profiles
    }

    pub fn is_normalized(&self) -> bool {
        self.profiles.iter().all(|p| p.normalized)
    }

    pub fn normalized(&self) -> Result<ProfilePanel> {
        let profiles = self
            .profiles
            .iter()
            .map(normalize_profile)
            .collect::<Result<Vec<_>>>()?;
        Ok(ProfilePanel {
            profiles,
            ..self.clone()
        })
    }

    /// Restricts every profile to the `[start_minute, end_minute)` part of the
    /// grid. Only raw panels can be restricted, since normalization is
    /// relative to the window.
    pub fn restrict_window(&self, start_minute: u32, end_minute: u32) -> Result<ProfilePanel> {
        if self.profiles.iter().any(|p| p.normalized) {
            return Err(Error::Contract(
                "window restriction must precede normalization".into(),
            ));
        }
        let (grid, range) = self.grid.sub_window(start_minute, end_minute)?;
        let profiles = self
            .profiles
            .iter()
            .map(|p| {
                DailyProfile::raw(
                    p.household_id.clone(),
                    p.day,
                    p.values[range.clone()].to_vec(),
                )
            })
            .collect();
        Ok(ProfilePanel {
            grid,
            households: self.households.clone(),
            days: self.days.clone(),
            profiles,
        })
    }

    /// Keeps only the days for which `keep` returns true.
    pub fn retain_days(&self, mut keep: impl FnMut(NaiveDate) -> bool) -> Result<ProfilePanel> {
        let kept: Vec<usize> = (0..self.days.len())
            .filter(|&d| keep(self.days[d]))
            .collect();
        if kept.is_empty() {
            return Err(Error::EmptyCalendar);
        }
        let days = kept.iter().map(|&d| self.days[d]).collect();
        let profiles = (0..self.households.len())
            .flat_map(|h| kept.iter().map(move |&d| (h, d)))
            .map(|(h, d)| self.profile(h, d).clone())
            .collect();
        Ok(ProfilePanel {
            grid: self.grid,
            households: self.households.clone(),
            days,
            profiles,
        })
    }
}

/// Restricts a panel to days whose weekday is in `weekdays` and whose date is
/// in `day_range`.
pub fn filter_calendar(
    panel: &ProfilePanel,
    weekdays: &BTreeSet<WeekdayName>,
    day_range: RangeInclusive<NaiveDate>,
) -> Result<ProfilePanel> {
    panel.retain_days(|d| day_range.contains(&d) && weekdays.contains(&WeekdayName(d.weekday())))
}

/// Orderable wrapper around [`chrono::Weekday`] (Monday first).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct WeekdayName(pub Weekday);

impl WeekdayName {
    pub fn all() -> BTreeSet<WeekdayName> {
        [
            Weekday::Mon,
            Weekday::Tue,
            Weekday::Wed,
            Weekday::Thu,
            Weekday::Fri,
            Weekday::Sat,
            Weekday::Sun,
        ]
        .into_iter()
        .map(WeekdayName)
        .collect()
    }

    pub fn set(days: &[Weekday]) -> BTreeSet<WeekdayName> {
        days.iter().copied().map(WeekdayName).collect()
    }
}

impl PartialOrd for WeekdayName {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for WeekdayName {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0
            .num_days_from_monday()
            .cmp(&other.0.num_days_from_monday())
    }
}

impl TryFrom<String> for WeekdayName {
    type Error = String;

    fn try_from(s: String) -> std::result::Result<Self, String> {
        s.parse::<Weekday>()
            .map(WeekdayName)
            .map_err(|_| format!("unknown weekday {s:?}"))
    }
}

impl From<WeekdayName> for String {
    fn from(w: WeekdayName) -> String {
        w.0.to_string()
    }
}
