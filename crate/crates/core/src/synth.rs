//! Synthetic electricity and travel-time datasets with planted coupling
//! between daily pattern shares and congestion onset.

use std::collections::BTreeSet;
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{
    parse_clock, write_electricity_csv, write_travel_time, DailyProfile, ProfilePanel, TimeGrid,
    TravelTimeSeries, WeekdayName,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DayDistribution {
    /// The same pattern weights on every day.
    Fixed { weights: Vec<f64> },
    /// Per-day weights drawn from a Dirichlet with the given total
    /// concentration around uniform weights.
    Dirichlet { concentration: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentSpec {
    pub id: String,
    /// Added to the base CST, hours.
    pub cst_offset: f64,
    /// Multiplies every pattern coupling for this segment.
    pub coupling_scale: f64,
    /// Hours before the CST at which travel time starts rising toward the
    /// congestion threshold, starting no earlier than midnight; zero for an
    /// abrupt onset.
    pub ramp_lead_hours: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSpec {
    pub households: usize,
    pub days: usize,
    pub start_date: NaiveDate,
    pub weekdays: BTreeSet<WeekdayName>,
    pub interval_minutes: u32,
    /// Profile window as "HH:MM".
    pub window_start: String,
    pub window_end: String,
    pub patterns: usize,
    /// One non-negative template per pattern; drawn from the seed when absent.
    pub templates: Option<Vec<Vec<f64>>>,
    pub day_distribution: DayDistribution,
    /// CST shift in hours per unit share of each pattern.
    pub coupling: Vec<f64>,
    pub base_cst: f64,
    pub cst_noise_sd: f64,
    pub duration_base: f64,
    pub duration_coupling: Vec<f64>,
    pub duration_noise_sd: f64,
    /// Gaussian noise on every profile value, kWh, clipped at zero.
    pub profile_noise_sd: f64,
    pub segments: Vec<SegmentSpec>,
    pub free_flow_seconds: f64,
    /// Relative travel-time jitter outside congestion, capped at 5%.
    pub travel_noise_sd: f64,
    pub seed: u64,
}

/// Alternating `+magnitude` / `-magnitude` couplings on equally many patterns,
/// zero on the rest. The last pattern is always zero, and the nonzero values
/// among the others are balanced so that their median is zero. Shifting the
/// non-reference coefficients by a constant then never lowers their L1 norm,
/// which keeps the planted values the sparsest parametrization a LASSO fit
/// on K-1 shares can target.
pub fn alternating_coupling(k: usize, magnitude: f64) -> Vec<f64> {
    let signed = 2 * (k.saturating_sub(1) / 2);
    (0..k)
        .map(|i| {
            if i >= signed {
                0.0
            } else if i % 2 == 0 {
                magnitude
            } else {
                -magnitude
            }
        })
        .collect()
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        let k = 10;
        ScenarioSpec {
            households: 322,
            days: 79,
            start_date: NaiveDate::from_ymd_opt(2014, 5, 1).expect("valid date"),
            weekdays: WeekdayName::set(&[
                chrono::Weekday::Tue,
                chrono::Weekday::Wed,
                chrono::Weekday::Thu,
            ]),
            interval_minutes: 5,
            window_start: "00:00".into(),
            window_end: "06:00".into(),
            patterns: k,
            templates: None,
            day_distribution: DayDistribution::Dirichlet { concentration: 3.0 },
            coupling: alternating_coupling(k, 0.25),
            base_cst: 7.0,
            cst_noise_sd: 0.1,
            duration_base: 1.5,
            duration_coupling: alternating_coupling(k, 0.5),
            duration_noise_sd: 0.1,
            profile_noise_sd: 0.03,
            segments: vec![
                SegmentSpec {
                    id: "S1".into(),
                    cst_offset: 0.0,
                    coupling_scale: 1.0,
                    ramp_lead_hours: 0.0,
                },
                SegmentSpec {
                    id: "S2".into(),
                    cst_offset: 0.25,
                    coupling_scale: 0.5,
                    ramp_lead_hours: 0.0,
                },
                SegmentSpec {
                    id: "S3".into(),
                    cst_offset: 0.5,
                    coupling_scale: 1.0,
                    ramp_lead_hours: 8.0,
                },
            ],
            free_flow_seconds: 60.0,
            travel_noise_sd: 0.02,
            seed: 0,
        }
    }
}

/// Ratio to free flow inside planted congestion.
const CONGESTED_RATIO: f64 = 2.5;
/// Cap on the ratio a ramp reaches before the onset.
const RAMP_PEAK_RATIO: f64 = 1.9;
const TRAVEL_NOISE_CAP: f64 = 0.05;
/// Intervals a planted congestion block lasts at least.
const MIN_BLOCK: usize = 3;
/// Planted onsets must fall in this window, minutes after midnight.
const ONSET_WINDOW: (u32, u32) = (5 * 60, 12 * 60);

impl ScenarioSpec {
    pub fn profile_grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(
            self.interval_minutes,
            parse_clock(&self.window_start)?,
            parse_clock(&self.window_end)?,
        )
    }

    pub fn calendar(&self) -> Vec<NaiveDate> {
        let mut out = Vec::with_capacity(self.days);
        let mut d = self.start_date;
        while out.len() < self.days {
            if self.weekdays.contains(&WeekdayName(d.weekday())) {
                out.push(d);
            }
            d = d.succ_opt().expect("date in range");
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("scenario: {m}")));
        if self.households == 0 || self.days == 0 || self.patterns < 2 {
            return bad("households, days and at least 2 patterns are required".into());
        }
        if self.weekdays.is_empty() {
            return bad("no weekdays selected".into());
        }
        for (name, v) in [
            ("coupling", &self.coupling),
            ("duration_coupling", &self.duration_coupling),
        ] {
            if v.len() != self.patterns {
                return bad(format!(
                    "{name} has {} entries for {} patterns",
                    v.len(),
                    self.patterns
                ));
            }
        }
        if let Some(t) = &self.templates {
            let len = self.profile_grid()?.len();
            if t.len() != self.patterns || t.iter().any(|x| x.len() != len) {
                return bad(format!(
                    "templates must be {} vectors of length {len}",
                    self.patterns
                ));
            }
            if t.iter().flatten().any(|v| !(*v >= 0.0)) {
                return bad("templates must be non-negative".into());
            }
        }
        match &self.day_distribution {
            DayDistribution::Fixed { weights } => {
                if weights.len() != self.patterns || weights.iter().any(|w| !(*w >= 0.0)) {
                    return bad("fixed weights must be non-negative, one per pattern".into());
                }
                if (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                    return bad("fixed weights must sum to 1".into());
                }
            }
            DayDistribution::Dirichlet { concentration } => {
                if !(*concentration > 0.0) {
                    return bad("Dirichlet concentration must be positive".into());
                }
            }
        }
        for sd in [
            self.cst_noise_sd,
            self.duration_noise_sd,
            self.profile_noise_sd,
            self.travel_noise_sd,
        ] {
            if !(sd >= 0.0) {
                return bad("noise standard deviations must be non-negative".into());
            }
        }
        if self.segments.is_empty() || !(self.free_flow_seconds > 0.0) {
            return bad("at least one segment and a positive free-flow time are required".into());
        }
        let ids: BTreeSet<&str> = self.segments.iter().map(|s| s.id.as_str()).collect();
        if ids.len() != self.segments.len() {
            return bad("segment ids must be unique".into());
        }
        if self.segments.iter().any(|s| !(s.ramp_lead_hours >= 0.0)) {
            return bad("ramp leads must be non-negative".into());
        }
        self.profile_grid()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentDayTruth {
    pub day: NaiveDate,
    /// Planted onset before rounding up to the travel-time grid, hours.
    pub cst: f64,
    /// Onset the travel-time series encodes, hours.
    pub grid_cst: f64,
    pub duration: f64,
    pub grid_duration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentTruth {
    pub segment_id: String,
    pub days: Vec<SegmentDayTruth>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub spec: ScenarioSpec,
    pub templates: Vec<Vec<f64>>,
    pub days: Vec<NaiveDate>,
    pub households: Vec<String>,
    /// Per-day pattern weights the labels were drawn from.
    pub day_weights: Vec<Vec<f64>>,
    /// Zero-based planted pattern per household (outer) and day (inner).
    pub labels: Vec<Vec<usize>>,
    /// Realized pattern shares per day.
    pub shares: Vec<Vec<f64>>,
    pub segments: Vec<SegmentTruth>,
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    /// Raw (unnormalized) profiles on the profile window.
    pub panel: ProfilePanel,
    pub travel: Vec<TravelTimeSeries>,
    pub truth: GroundTruth,
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const TEMPLATE_STREAM: u64 = 0;
const DAY_STREAM_BASE: u64 = 1 << 20;
const SEGMENT_STREAM_BASE: u64 = 1 << 40;

/// Templates with independent per-interval levels, so that every sub-window
/// of the profile window still separates the patterns.
fn draw_templates(spec: &ScenarioSpec, len: usize) -> Vec<Vec<f64>> {
    let mut rng = rng_for(spec.seed, TEMPLATE_STREAM);
    (0..spec.patterns)
        .map(|_| (0..len).map(|_| rng.random_range(0.05..0.6)).collect())
        .collect()
}

fn round_kwh(v: f64) -> f64 {
    (v * 1e4).round() / 1e4
}

struct DayDraw {
    weights: Vec<f64>,
    labels: Vec<usize>,
    profiles: Vec<Vec<f64>>,
}

fn draw_day(spec: &ScenarioSpec, templates: &[Vec<f64>], d: usize) -> Result<DayDraw> {
    let mut rng = rng_for(spec.seed, DAY_STREAM_BASE + d as u64);
    let k = spec.patterns;
    let weights = match &spec.day_distribution {
        DayDistribution::Fixed { weights } => weights.clone(),
        DayDistribution::Dirichlet { concentration } => {
            // Normalized Gamma draws, since the dimension is only known at run time.
            let gamma = Gamma::new(concentration / k as f64, 1.0)
                .map_err(|e| Error::Config(format!("scenario: {e}")))?;
            let draws: Vec<f64> = (0..k).map(|_| gamma.sample(&mut rng)).collect();
            let total: f64 = draws.iter().sum();
            if total > 0.0 {
                draws.iter().map(|g| g / total).collect()
            } else {
                vec![1.0 / k as f64; k]
            }
        }
    };
    let noise = Normal::new(0.0, spec.profile_noise_sd)
        .map_err(|e| Error::Config(format!("scenario: {e}")))?;
    let mut labels = Vec::with_capacity(spec.households);
    let mut profiles = Vec::with_capacity(spec.households);
    for _ in 0..spec.households {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut z = k - 1;
        for (i, w) in weights.iter().enumerate() {
            acc += w;
            if u < acc {
                z = i;
                break;
            }
        }
        labels.push(z);
        profiles.push(
            templates[z]
                .iter()
                .map(|t| round_kwh((t + noise.sample(&mut rng)).max(0.0)))
                .collect(),
        );
    }
    Ok(DayDraw {
        weights,
        labels,
        profiles,
    })
}

fn travel_day(
    segment: &SegmentSpec,
    spec: &ScenarioSpec,
    grid: &TimeGrid,
    day: NaiveDate,
    onset: usize,
    block: usize,
    rng: &mut ChaCha8Rng,
) -> TravelTimeSeries {
    let ff = spec.free_flow_seconds;
    let per_hour = 60.0 / grid.interval_minutes() as f64;
    let ramp_len = (segment.ramp_lead_hours * per_hour).round() as usize;
    let ramp_start = onset.saturating_sub(ramp_len);
    let times = (0..grid.len())
        .map(|t| {
            let jitter = (spec.travel_noise_sd * rng.sample::<f64, _>(StandardNormal))
                .abs()
                .min(TRAVEL_NOISE_CAP);
            let level = if t >= onset && t < onset + block {
                CONGESTED_RATIO
            } else if t >= ramp_start && t < onset {
                // A line that would reach twice free flow at the onset,
                // capped below the threshold so the onset stays exact.
                (1.0 + (t - ramp_start + 1) as f64 / (onset - ramp_start + 1) as f64)
                    .min(RAMP_PEAK_RATIO)
            } else {
                1.0
            };
            // The first interval of each day is exact free flow, which pins
            // the minimum-based free-flow estimate.
            if t == 0 {
                ff
            } else {
                ff * (level + jitter)
            }
        })
        .collect();
    TravelTimeSeries::complete(segment.id.clone(), day, *grid, times)
}

/// Draws a complete scenario: planted patterns and profiles, per-day shares,
/// CSTs and durations per segment, and travel times that encode them.
pub fn generate(spec: &ScenarioSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let grid = spec.profile_grid()?;
    let templates = spec
        .templates
        .clone()
        .unwrap_or_else(|| draw_templates(spec, grid.len()));
    let days = spec.calendar();
    let households: Vec<String> = (1..=spec.households).map(|h| format!("h{h:04}")).collect();
    let draws: Vec<DayDraw> = (0..spec.days)
        .into_par_iter()
        .map(|d| draw_day(spec, &templates, d))
        .collect::<Result<_>>()?;

    let k = spec.patterns;
    let shares: Vec<Vec<f64>> = draws
        .iter()
        .map(|dd| {
            let mut counts = vec![0usize; k];
            for &z in &dd.labels {
                counts[z] += 1;
            }
            counts
                .iter()
                .map(|&c| c as f64 / spec.households as f64)
                .collect()
        })
        .collect();

    let mut profiles = Vec::with_capacity(spec.households * spec.days);
    for (h, hid) in households.iter().enumerate() {
        for (d, day) in days.iter().enumerate() {
            profiles.push(DailyProfile::raw(
                hid.clone(),
                *day,
                draws[d].profiles[h].clone(),
            ));
        }
    }
    let panel = ProfilePanel::new(grid, households.clone(), days.clone(), profiles)?;

    let travel_grid = TimeGrid::full_day(spec.interval_minutes)?;
    let interval_hours = travel_grid.interval_hours();
    let mut travel = Vec::with_capacity(spec.segments.len() * spec.days);
    let mut segment_truth = Vec::with_capacity(spec.segments.len());
    for (s, segment) in spec.segments.iter().enumerate() {
        let mut rng = rng_for(spec.seed, SEGMENT_STREAM_BASE + s as u64);
        let mut truths = Vec::with_capacity(spec.days);
        for (d, day) in days.iter().enumerate() {
            let signal = |coupling: &[f64]| -> f64 {
                coupling
                    .iter()
                    .zip(&shares[d])
                    .map(|(c, w)| c * w)
                    .sum::<f64>()
                    * segment.coupling_scale
            };
            let cst = spec.base_cst
                + segment.cst_offset
                + signal(&spec.coupling)
                + spec.cst_noise_sd * rng.sample::<f64, _>(StandardNormal);
            let duration = spec.duration_base
                + signal(&spec.duration_coupling)
                + spec.duration_noise_sd * rng.sample::<f64, _>(StandardNormal);
            let minute = cst * 60.0;
            if !(minute >= ONSET_WINDOW.0 as f64 && minute < ONSET_WINDOW.1 as f64) {
                return Err(Error::Config(format!(
                    "scenario: planted CST {cst:.3} h for {} on {day} is outside 05:00-12:00",
                    segment.id
                )));
            }
            let onset = travel_grid.first_index_at_or_after(minute.ceil() as u32);
            if travel_grid.minute_of(onset) >= ONSET_WINDOW.1 {
                return Err(Error::Config(format!(
                    "scenario: planted CST {cst:.3} h rounds past the onset window"
                )));
            }
            let block = ((duration / interval_hours).round().max(MIN_BLOCK as f64) as usize)
                .min(travel_grid.len() - onset);
            let series = travel_day(segment, spec, &travel_grid, *day, onset, block, &mut rng);
            travel.push(series);
            truths.push(SegmentDayTruth {
                day: *day,
                cst,
                grid_cst: travel_grid.hours_of(onset),
                duration,
                grid_duration: block as f64 * interval_hours,
            });
        }
        segment_truth.push(SegmentTruth {
            segment_id: segment.id.clone(),
            days: truths,
        });
    }

    let labels = (0..spec.households)
        .map(|h| draws.iter().map(|dd| dd.labels[h]).collect())
        .collect();
    let truth = GroundTruth {
        spec: spec.clone(),
        templates,
        days,
        households,
        day_weights: draws.iter().map(|dd| dd.weights.clone()).collect(),
        labels,
        shares,
        segments: segment_truth,
    };
    Ok(SyntheticData {
        panel,
        travel,
        truth,
    })
}

pub const ELECTRICITY_FILE: &str = "electricity.csv";
pub const TRAVEL_FILE: &str = "travel_time.csv";
pub const TRUTH_FILE: &str = "ground_truth.json";

/// Writes the electricity CSV, travel-time CSV and ground-truth JSON into `dir`.
pub fn write_synthetic(data: &SyntheticData, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_electricity_csv(&data.panel, dir.join(ELECTRICITY_FILE))?;
    let travel_path = dir.join(TRAVEL_FILE);
    let file = std::fs::File::create(&travel_path).map_err(|e| Error::io(&travel_path, e))?;
    write_travel_time(&data.travel, std::io::BufWriter::new(file))?;
    let truth_path = dir.join(TRUTH_FILE);
    std::fs::write(&truth_path, serde_json::to_string(&data.truth)?)
        .map_err(|e| Error::io(&truth_path, e))?;
    Ok(())
}

pub fn read_ground_truth(path: impl AsRef<Path>) -> Result<GroundTruth> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn unit(v: &[f64]) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        v.to_vec()
    } else {
        v.iter().map(|x| x / norm).collect()
    }
}

/// Greedy one-to-one matching of fitted centroids to templates by distance
/// between unit-norm vectors. Returns `order` with `order[i]` the centroid
/// matched to template `i`, suitable for `PatternModel::reorder`.
pub fn match_patterns(centroids: &[Vec<f64>], templates: &[Vec<f64>]) -> Result<Vec<usize>> {
    if centroids.len() != templates.len() {
        return Err(Error::LengthMismatch {
            expected: templates.len(),
            actual: centroids.len(),
        });
    }
    let c: Vec<Vec<f64>> = centroids.iter().map(|v| unit(v)).collect();
    let t: Vec<Vec<f64>> = templates.iter().map(|v| unit(v)).collect();
    let mut pairs = Vec::with_capacity(c.len() * t.len());
    for (i, tv) in t.iter().enumerate() {
        for (j, cv) in c.iter().enumerate() {
            if tv.len() != cv.len() {
                return Err(Error::LengthMismatch {
                    expected: tv.len(),
                    actual: cv.len(),
                });
            }
            let d: f64 = tv.iter().zip(cv).map(|(a, b)| (a - b) * (a - b)).sum();
            pairs.push((d, i, j));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut order = vec![usize::MAX; t.len()];
    let mut used = vec![false; c.len()];
    for (_, i, j) in pairs {
        if order[i] == usize::MAX && !used[j] {
            order[i] = j;
            used[j] = true;
        }
    }
    Ok(order)
}

/// Rand index between two labelings of the same items.
pub fn rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    let n = a.len() as f64;
    if a.len() < 2 {
        return Ok(1.0);
    }
    let mut table = std::collections::HashMap::<(usize, usize), f64>::new();
    let mut rows = std::collections::HashMap::<usize, f64>::new();
    let mut cols = std::collections::HashMap::<usize, f64>::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1.0;
        *rows.entry(x).or_default() += 1.0;
        *cols.entry(y).or_default() += 1.0;
    }
    let pairs = |v: f64| v * (v - 1.0) / 2.0;
    let both: f64 = table.values().map(|&v| pairs(v)).sum();
    let same_a: f64 = rows.values().map(|&v| pairs(v)).sum();
    let same_b: f64 = cols.values().map(|&v| pairs(v)).sum();
    let total = pairs(n);
    // Agreements are pairs together in both plus pairs apart in both.
    Ok((total + 2.0 * both - same_a - same_b) / total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::congestion::{extract_records, CongestionParams};

    fn small() -> ScenarioSpec {
        ScenarioSpec {
            households: 30,
            days: 12,
            ..Default::default()
        }
    }

    #[test]
    fn calendar_respects_weekdays() {
        let spec = small();
        let cal = spec.calendar();
        assert_eq!(cal.len(), 12);
        // 2014-05-01 is a Thursday.
        assert_eq!(cal[0], NaiveDate::from_ymd_opt(2014, 5, 1).unwrap());
        assert_eq!(cal[1], NaiveDate::from_ymd_opt(2014, 5, 6).unwrap());
        assert!(cal
            .iter()
            .all(|d| spec.weekdays.contains(&WeekdayName(d.weekday()))));
    }

    #[test]
    fn default_shape() {
        let spec = ScenarioSpec::default();
        assert_eq!((spec.households, spec.days, spec.patterns), (322, 79, 10));
        assert_eq!(spec.profile_grid().unwrap().len(), 72);
        assert_eq!(spec.coupling[9], 0.0);
        assert_eq!(spec.coupling[8], 0.0);
        assert_eq!(spec.coupling[0], 0.25);
        assert_eq!(spec.coupling[1], -0.25);
    }

    #[test]
    fn extraction_recovers_planted_onsets() {
        let data = generate(&small()).unwrap();
        let records = extract_records(&data.travel, &CongestionParams::default()).unwrap();
        let mut expected = Vec::new();
        for seg in &data.truth.segments {
            for t in &seg.days {
                expected.push((seg.segment_id.clone(), t.day, t.grid_cst, t.grid_duration));
            }
        }
        expected.sort_by(|a, b| (&a.0, a.1).cmp(&(&b.0, b.1)));
        assert_eq!(records.len(), expected.len());
        for (r, e) in records.iter().zip(&expected) {
            assert_eq!((&r.segment_id, r.day), (&e.0, e.1));
            assert_eq!(r.cst, Some(e.2));
            assert!((r.duration.unwrap() - e.3).abs() < 1e-9);
            assert_eq!(r.fftt, 60.0);
        }
        for seg in &data.truth.segments {
            for t in &seg.days {
                assert!(t.grid_cst >= t.cst && t.grid_cst - t.cst < 5.0 / 60.0 + 1e-12);
            }
        }
    }

    #[test]
    fn shares_and_weights_are_distributions() {
        let data = generate(&small()).unwrap();
        for (w, s) in data.truth.day_weights.iter().zip(&data.truth.shares) {
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!(data
            .panel
            .profiles()
            .iter()
            .flat_map(|p| &p.values)
            .all(|v| *v >= 0.0));
    }

    #[test]
    fn same_seed_same_data() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(a.panel, b.panel);
        assert_eq!(a.travel, b.travel);
        assert_eq!(a.truth, b.truth);
        let c = generate(&ScenarioSpec { seed: 1, ..small() }).unwrap();
        assert_ne!(a.panel, c.panel);
    }

    #[test]
    fn out_of_window_onset_is_rejected() {
        let spec = ScenarioSpec {
            base_cst: 4.0,
            ..small()
        };
        assert!(matches!(generate(&spec), Err(Error::Config(_))));
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut spec = small();
        spec.coupling.pop();
        assert!(spec.validate().is_err());
        let spec = ScenarioSpec {
            day_distribution: DayDistribution::Fixed {
                weights: vec![0.5; 10],
            },
            ..small()
        };
        assert!(spec.validate().is_err());
    }

    #[test]
    fn match_patterns_inverts_a_permutation() {
        let templates = vec![
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ];
        let centroids = vec![
            vec![0.0, 2.0, 0.1],
            vec![0.1, 0.0, 3.0],
            vec![5.0, 0.2, 0.0],
        ];
        assert_eq!(
            match_patterns(&centroids, &templates).unwrap(),
            vec![2, 0, 1]
        );
    }

    #[test]
    fn rand_index_examples() {
        assert_eq!(rand_index(&[0, 0, 1, 1], &[5, 5, 7, 7]).unwrap(), 1.0);
        // Only the pairs (0,3) and (1,2) are apart under both labelings.
        assert!((rand_index(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap() - 2.0 / 6.0).abs() < 1e-12);
    }
}
