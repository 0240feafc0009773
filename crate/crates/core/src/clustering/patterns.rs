use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::kmeans::{count_distinct, kmeans, kmeans_unchecked, nearest, KMeansFit, KMeansParams};
use crate::data::{check_header, ProfilePanel, TimeGrid};
use crate::error::{Error, Result};

pub const ASSIGNMENT_HEADER: [&str; 3] = ["household_id", "day", "pattern"];

/// Letter name of a zero-based pattern index (0 -> 'A').
pub fn pattern_letter(index: usize) -> String {
    if index < 26 {
        char::from(b'A' + index as u8).to_string()
    } else {
        format!("P{}", index + 1)
    }
}

/// Zero-based pattern index of every (household, day) cell, household-major.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternAssignment {
    pub households: Vec<String>,
    pub days: Vec<NaiveDate>,
    pub labels: Vec<usize>,
}

impl PatternAssignment {
    pub fn pattern(&self, h: usize, d: usize) -> usize {
        self.labels[h * self.days.len() + d]
    }

    pub fn n_households(&self) -> usize {
        self.households.len()
    }

    pub fn n_days(&self) -> usize {
        self.days.len()
    }

    pub fn to_map(&self) -> BTreeMap<(String, NaiveDate), usize> {
        let mut m = BTreeMap::new();
        for (h, id) in self.households.iter().enumerate() {
            for (d, day) in self.days.iter().enumerate() {
                m.insert((id.clone(), *day), self.pattern(h, d));
            }
        }
        m
    }
}

/// Typical daily patterns learned from a normalized panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternModel {
    pub k: usize,
    pub grid: TimeGrid,
    pub centroids: Vec<Vec<f64>>,
    /// Sum of squared distances of clustered profiles to their centroid.
    pub inertia: f64,
    pub seed: u64,
    /// Assignment of every panel cell. All-zero profiles, which do not take
    /// part in clustering, are assigned to their nearest centroid.
    pub assignment: PatternAssignment,
    pub excluded: Vec<(String, NaiveDate)>,
}

impl PatternModel {
    /// Relabels patterns so that new pattern `i` is old pattern `order[i]`.
    pub fn reorder(&self, order: &[usize]) -> Result<PatternModel> {
        let mut seen = vec![false; self.k];
        if order.len() != self.k
            || order
                .iter()
                .any(|&o| o >= self.k || std::mem::replace(&mut seen[o], true))
        {
            return Err(Error::Contract(format!(
                "{order:?} is not a permutation of 0..{}",
                self.k
            )));
        }
        let mut inverse = vec![0; self.k];
        for (new, &old) in order.iter().enumerate() {
            inverse[old] = new;
        }
        let mut out = self.clone();
        out.centroids = order.iter().map(|&o| self.centroids[o].clone()).collect();
        out.assignment.labels = self.assignment.labels.iter().map(|&l| inverse[l]).collect();
        Ok(out)
    }
}

fn clustered_points(
    panel: &ProfilePanel,
) -> Result<(Vec<Vec<f64>>, Vec<usize>, Vec<(String, NaiveDate)>)> {
    if !panel.is_normalized() {
        return Err(Error::Contract(
            "pattern clustering expects a normalized panel".into(),
        ));
    }
    let mut points = Vec::new();
    let mut cells = Vec::new();
    let mut excluded = Vec::new();
    for (i, p) in panel.profiles().iter().enumerate() {
        if p.all_zero {
            excluded.push((p.household_id.clone(), p.day));
        } else {
            points.push(p.values.clone());
            cells.push(i);
        }
    }
    Ok((points, cells, excluded))
}

/// Clusters all non-zero daily profiles of a normalized panel into `params.k`
/// patterns.
pub fn fit_patterns(panel: &ProfilePanel, params: &KMeansParams) -> Result<PatternModel> {
    let (points, cells, excluded) = clustered_points(panel)?;
    let fit = kmeans(&points, params)?;
    Ok(model_from_fit(panel, params, fit, &cells, excluded))
}

/// Profiles that take part in clustering, for K selection.
pub fn clustering_points(panel: &ProfilePanel) -> Result<Vec<Vec<f64>>> {
    Ok(clustered_points(panel)?.0)
}

fn model_from_fit(
    panel: &ProfilePanel,
    params: &KMeansParams,
    fit: KMeansFit,
    cells: &[usize],
    excluded: Vec<(String, NaiveDate)>,
) -> PatternModel {
    let mut labels = vec![usize::MAX; panel.profiles().len()];
    for (&cell, &l) in cells.iter().zip(&fit.labels) {
        labels[cell] = l;
    }
    for (cell, p) in panel.profiles().iter().enumerate() {
        if labels[cell] == usize::MAX {
            labels[cell] = nearest(&p.values, &fit.centroids).0;
        }
    }
    PatternModel {
        k: params.k,
        grid: panel.grid(),
        centroids: fit.centroids,
        inertia: fit.inertia,
        seed: params.seed,
        assignment: PatternAssignment {
            households: panel.households().to_vec(),
            days: panel.days().to_vec(),
            labels,
        },
        excluded,
    }
}

/// Maps every profile of `panel` to its nearest centroid (lowest index on ties).
pub fn assign_patterns(model: &PatternModel, panel: &ProfilePanel) -> Result<PatternAssignment> {
    if model.grid.len() != panel.grid().len() {
        return Err(Error::LengthMismatch {
            expected: model.grid.len(),
            actual: panel.grid().len(),
        });
    }
    let labels = panel
        .profiles()
        .iter()
        .map(|p| nearest(&p.values, &model.centroids).0)
        .collect();
    Ok(PatternAssignment {
        households: panel.households().to_vec(),
        days: panel.days().to_vec(),
        labels,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Season {
    Summer,
    Winter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeasonSplit {
    pub seasons: BTreeMap<NaiveDate, Season>,
    /// Share of day-mean usage falling in 00:00-04:00, per season.
    pub night_share: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
}

const NIGHT_END_MINUTE: u32 = 4 * 60;

fn night_share(grid: &TimeGrid, values: &[f64]) -> f64 {
    let total: f64 = values.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    let night: f64 = values
        .iter()
        .enumerate()
        .filter(|(t, _)| grid.minute_of(*t) < NIGHT_END_MINUTE)
        .map(|(_, v)| v)
        .sum();
    night / total
}

/// Two-way seasonal split of days by clustering per-day mean profiles. The
/// cluster with the larger night-time usage share is labelled summer.
pub fn seasonal_split(panel: &ProfilePanel, seed: u64) -> Result<SeasonSplit> {
    let grid = panel.grid();
    if grid.start_minute() >= NIGHT_END_MINUTE {
        return Err(Error::Config(
            "seasonal split needs a grid covering 00:00-04:00".into(),
        ));
    }
    let (h, d) = (panel.n_households(), panel.n_days());
    if d < 2 {
        return Err(Error::Infeasible(format!(
            "seasonal split needs at least 2 days, got {d}"
        )));
    }
    let day_means: Vec<Vec<f64>> = (0..d)
        .map(|day| {
            let mut m = vec![0.0; grid.len()];
            for hh in 0..h {
                for (acc, v) in m.iter_mut().zip(&panel.profile(hh, day).values) {
                    *acc += v;
                }
            }
            m.iter_mut().for_each(|v| *v /= h as f64);
            m
        })
        .collect();
    let mut warnings = Vec::new();
    if count_distinct(&day_means) < 2 {
        warnings
            .push("all day-mean profiles are identical; seasonal split is arbitrary".to_string());
    }
    let fit = kmeans_unchecked(&day_means, &KMeansParams::new(2, seed))?;
    if fit.repairs > 0 {
        warnings.push(format!("{} empty season cluster(s) repaired", fit.repairs));
    }
    let shares: Vec<f64> = fit
        .centroids
        .iter()
        .map(|c| night_share(&grid, c))
        .collect();
    let summer = if shares[1] > shares[0] { 1 } else { 0 };
    let seasons = panel
        .days()
        .iter()
        .zip(&fit.labels)
        .map(|(day, &l)| {
            (
                *day,
                if l == summer {
                    Season::Summer
                } else {
                    Season::Winter
                },
            )
        })
        .collect();
    let night_share = BTreeMap::from([
        ("summer".to_string(), shares[summer]),
        ("winter".to_string(), shares[1 - summer]),
    ]);
    Ok(SeasonSplit {
        seasons,
        night_share,
        warnings,
    })
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    k: usize,
    grid: TimeGrid,
    seed: u64,
    inertia: f64,
    centroids: Vec<Vec<f64>>,
    excluded: Vec<(String, NaiveDate)>,
}

pub fn write_pattern_model(model: &PatternModel, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    let json = serde_json::to_string_pretty(&ModelFile {
        k: model.k,
        grid: model.grid,
        seed: model.seed,
        inertia: model.inertia,
        centroids: model.centroids.clone(),
        excluded: model.excluded.clone(),
    })?;
    let path = dir.join("pattern_model.json");
    std::fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    let path = dir.join("assignments.csv");
    let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
    write_assignments(&model.assignment, std::io::BufWriter::new(file))
}

pub fn read_pattern_model(dir: impl AsRef<Path>) -> Result<PatternModel> {
    let dir = dir.as_ref();
    let path = dir.join("pattern_model.json");
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let file: ModelFile = serde_json::from_str(&text)?;
    let path = dir.join("assignments.csv");
    let f = File::open(&path).map_err(|e| Error::io(&path, e))?;
    let assignment = read_assignments(f, file.k)?;
    Ok(PatternModel {
        k: file.k,
        grid: file.grid,
        centroids: file.centroids,
        inertia: file.inertia,
        seed: file.seed,
        assignment,
        excluded: file.excluded,
    })
}

/// Writes `household_id,day,pattern` rows with 1-based pattern numbers.
pub fn write_assignments<W: Write>(a: &PatternAssignment, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(ASSIGNMENT_HEADER)?;
    for (h, id) in a.households.iter().enumerate() {
        for (d, day) in a.days.iter().enumerate() {
            w.write_record([
                id.as_str(),
                &day.to_string(),
                &(a.pattern(h, d) + 1).to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io("<assignment writer>", e))?;
    Ok(())
}

pub fn read_assignments<R: Read>(reader: R, k: usize) -> Result<PatternAssignment> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    check_header(rdr.headers()?, &ASSIGNMENT_HEADER)?;
    let mut cells: BTreeMap<(String, NaiveDate), usize> = BTreeMap::new();
    let mut record = csv::StringRecord::new();
    while rdr.read_record(&mut record)? {
        let line = record.position().map_or(0, |p| p.line());
        let day: NaiveDate = record[1]
            .parse()
            .map_err(|_| Error::parse(line, format!("invalid day {:?}", &record[1])))?;
        let pattern: usize = record[2]
            .parse()
            .ok()
            .filter(|&p| p >= 1 && p <= k)
            .ok_or_else(|| {
                Error::parse(
                    line,
                    format!("pattern must be in 1..={k}, got {:?}", &record[2]),
                )
            })?;
        cells.insert((record[0].to_string(), day), pattern - 1);
    }
    let mut households: Vec<String> = cells.keys().map(|(h, _)| h.clone()).collect();
    households.dedup();
    let mut days: Vec<NaiveDate> = cells.keys().map(|(_, d)| *d).collect();
    days.sort();
    days.dedup();
    if cells.len() != households.len() * days.len() {
        return Err(Error::Contract(format!(
            "assignment table is incomplete: {} cells for {} households x {} days",
            cells.len(),
            households.len(),
            days.len()
        )));
    }
    Ok(PatternAssignment {
        households,
        days,
        labels: cells.into_values().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::DailyProfile;

    fn panel_from(grid: TimeGrid, rows: &[(&str, &str, Vec<f64>)]) -> ProfilePanel {
        let mut households: Vec<String> = rows.iter().map(|r| r.0.to_string()).collect();
        households.dedup();
        let mut days: Vec<NaiveDate> = rows.iter().map(|r| r.1.parse().unwrap()).collect();
        days.sort();
        days.dedup();
        let profiles = rows
            .iter()
            .map(|(h, d, v)| DailyProfile::raw(*h, d.parse().unwrap(), v.clone()))
            .collect();
        ProfilePanel::new(grid, households, days, profiles).unwrap()
    }

    fn model_with(centroids: Vec<Vec<f64>>) -> PatternModel {
        let grid = TimeGrid::new(60, 0, centroids[0].len() as u32 * 60).unwrap();
        PatternModel {
            k: centroids.len(),
            grid,
            centroids,
            inertia: 0.0,
            seed: 0,
            assignment: PatternAssignment {
                households: vec![],
                days: vec![],
                labels: vec![],
            },
            excluded: vec![],
        }
    }

    #[test]
    fn exact_match_and_tie_rule() {
        let model = model_with(vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.6, 0.8]]);
        let grid = model.grid;
        let panel = panel_from(
            grid,
            &[
                ("h1", "2014-06-03", vec![0.6, 0.8]),
                ("h2", "2014-06-03", vec![1.0, 0.0]),
            ],
        );
        let a = assign_patterns(&model, &panel).unwrap();
        assert_eq!(a.pattern(0, 0), 2);
        assert_eq!(a.pattern(1, 0), 0);

        // (0.5, 0.5) is equidistant to patterns 1 and 2 (indices 0 and 1).
        let tie = panel_from(grid, &[("h1", "2014-06-03", vec![0.5, 0.5])]);
        let model = model_with(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert_eq!(assign_patterns(&model, &tie).unwrap().pattern(0, 0), 0);
    }

    #[test]
    fn nearest_matches_brute_force_scan() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let centroids: Vec<Vec<f64>> = (0..10)
            .map(|_| (0..6).map(|_| rng.random::<f64>()).collect())
            .collect();
        let model = model_with(centroids.clone());
        for _ in 0..200 {
            let p: Vec<f64> = (0..6).map(|_| rng.random::<f64>()).collect();
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (j, c) in centroids.iter().enumerate() {
                let d: f64 = p.iter().zip(c).map(|(a, b)| (a - b).powi(2)).sum();
                if d < best_d {
                    best_d = d;
                    best = j;
                }
            }
            let panel = panel_from(model.grid, &[("h", "2014-06-03", p)]);
            assert_eq!(assign_patterns(&model, &panel).unwrap().pattern(0, 0), best);
        }
    }

    fn two_season_panel(identical: bool) -> ProfilePanel {
        let grid = TimeGrid::new(60, 0, 360).unwrap();
        let night = vec![3.0, 3.0, 3.0, 2.0, 0.5, 0.5];
        let morning = vec![0.5, 0.5, 0.5, 1.0, 3.0, 4.0];
        let mut rows = Vec::new();
        let days: Vec<String> = "2014-06-02"
            .parse::<NaiveDate>()
            .unwrap()
            .iter_days()
            .take(8)
            .map(|d| d.to_string())
            .collect();
        for h in ["a", "b", "c"] {
            for (i, d) in days.iter().enumerate() {
                let base = if identical || i % 2 == 0 {
                    &night
                } else {
                    &morning
                };
                let v = base.iter().map(|x| x * (1.0 + 0.01 * i as f64)).collect();
                rows.push((h, d.as_str(), v));
            }
        }
        let panel = panel_from(grid, &rows);
        if identical {
            let same = panel.profile(0, 0).values.clone();
            let profiles = panel
                .profiles()
                .iter()
                .map(|p| DailyProfile::raw(p.household_id.clone(), p.day, same.clone()))
                .collect();
            ProfilePanel::new(
                grid,
                panel.households().to_vec(),
                panel.days().to_vec(),
                profiles,
            )
            .unwrap()
        } else {
            panel
        }
    }

    #[test]
    fn seasonal_split_separates_templates() {
        let panel = two_season_panel(false);
        let split = seasonal_split(&panel, 4).unwrap();
        for (i, day) in panel.days().iter().enumerate() {
            let expected = if i % 2 == 0 {
                Season::Summer
            } else {
                Season::Winter
            };
            assert_eq!(split.seasons[day], expected);
        }
        assert!(split.night_share["summer"] > split.night_share["winter"]);
        assert!(split.warnings.is_empty());
    }

    #[test]
    fn seasonal_split_of_identical_days_is_repaired() {
        let panel = two_season_panel(true);
        let split = seasonal_split(&panel, 4).unwrap();
        assert!(!split.warnings.is_empty());
        let summers = split
            .seasons
            .values()
            .filter(|&&s| s == Season::Summer)
            .count();
        assert!(summers >= 1 && summers < panel.n_days());
    }

    #[test]
    fn seasonal_split_of_two_days() {
        let panel = two_season_panel(false)
            .retain_days(|d| d.to_string() <= "2014-06-03".into())
            .unwrap();
        let split = seasonal_split(&panel, 1).unwrap();
        assert_eq!(
            split
                .seasons
                .values()
                .filter(|&&s| s == Season::Summer)
                .count(),
            1
        );
        let one = panel
            .retain_days(|d| d.to_string() == "2014-06-02")
            .unwrap();
        assert!(matches!(seasonal_split(&one, 1), Err(Error::Infeasible(_))));
    }

    #[test]
    fn model_assignment_is_reproduced() {
        let panel = two_season_panel(false).normalized().unwrap();
        let model = fit_patterns(&panel, &KMeansParams::new(2, 5)).unwrap();
        assert_eq!(assign_patterns(&model, &panel).unwrap(), model.assignment);
        let tmp = tempfile::tempdir().unwrap();
        write_pattern_model(&model, tmp.path()).unwrap();
        assert_eq!(read_pattern_model(tmp.path()).unwrap(), model);
    }

    #[test]
    fn reorder_relabels_consistently() {
        let panel = two_season_panel(false).normalized().unwrap();
        let model = fit_patterns(&panel, &KMeansParams::new(2, 5)).unwrap();
        let swapped = model.reorder(&[1, 0]).unwrap();
        assert_eq!(swapped.centroids[0], model.centroids[1]);
        assert_eq!(
            assign_patterns(&swapped, &panel).unwrap(),
            swapped.assignment
        );
        assert!(model.reorder(&[0, 0]).is_err());
    }

    #[test]
    fn letters() {
        assert_eq!(pattern_letter(0), "A");
        assert_eq!(pattern_letter(9), "J");
    }
}
