//! Per-day feature vectors derived from pattern assignments.
//!
//! Pattern K (the last) is the reference category and is dropped from both
//! encodings.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::clustering::PatternAssignment;
use crate::congestion::CongestionRecord;
use crate::error::{Error, Result};
use crate::regression::Target;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Aggregate,
    Disaggregate,
    Mixed,
    AggregateCst,
}

impl FeatureKind {
    pub fn name(&self) -> &'static str {
        match self {
            FeatureKind::Aggregate => "aggregate",
            FeatureKind::Disaggregate => "disaggregate",
            FeatureKind::Mixed => "mixed",
            FeatureKind::AggregateCst => "aggregate_cst",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub days: Vec<NaiveDate>,
    pub names: Vec<String>,
    /// `days.len() x names.len()`.
    pub values: DMatrix<f64>,
    pub kind: FeatureKind,
}

impl FeatureMatrix {
    pub fn n_rows(&self) -> usize {
        self.days.len()
    }

    pub fn n_features(&self) -> usize {
        self.names.len()
    }

    pub fn select_rows(&self, rows: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            days: rows.iter().map(|&r| self.days[r]).collect(),
            names: self.names.clone(),
            values: self.values.select_rows(rows),
            kind: self.kind,
        }
    }

    fn with_column(&self, name: &str, column: &[f64], kind: FeatureKind) -> FeatureMatrix {
        let n = self.n_features();
        let values = self.values.clone().insert_column(n, 0.0);
        let mut values = values;
        for (r, v) in column.iter().enumerate() {
            values[(r, n)] = *v;
        }
        let mut names = self.names.clone();
        names.push(name.to_string());
        FeatureMatrix {
            days: self.days.clone(),
            names,
            values,
            kind,
        }
    }
}

pub fn share_name(pattern: usize) -> String {
    format!("pattern_{}_share", pattern + 1)
}

pub fn household_feature_name(household: &str, pattern: usize) -> String {
    format!("hh_{household}_pattern_{}", pattern + 1)
}

/// Inverse of [`household_feature_name`]: household id and zero-based pattern.
pub fn parse_household_feature(name: &str) -> Option<(&str, usize)> {
    let rest = name.strip_prefix("hh_")?;
    let (household, pattern) = rest.rsplit_once("_pattern_")?;
    let p: usize = pattern.parse().ok()?;
    (p >= 1).then_some((household, p - 1))
}

fn check_k(a: &PatternAssignment, k: usize) -> Result<()> {
    if k < 2 {
        return Err(Error::Config(format!(
            "features need at least 2 patterns, got K = {k}"
        )));
    }
    if let Some(&bad) = a.labels.iter().find(|&&l| l >= k) {
        return Err(Error::Contract(format!(
            "pattern index {} exceeds K = {k}",
            bad + 1
        )));
    }
    Ok(())
}

/// Share of households in each of patterns 1..K-1, per day.
pub fn aggregate_features(a: &PatternAssignment, k: usize) -> Result<FeatureMatrix> {
    check_k(a, k)?;
    let (h, d) = (a.n_households(), a.n_days());
    let mut values = DMatrix::zeros(d, k - 1);
    for day in 0..d {
        let mut counts = vec![0usize; k];
        for hh in 0..h {
            counts[a.pattern(hh, day)] += 1;
        }
        for p in 0..k - 1 {
            values[(day, p)] = counts[p] as f64 / h as f64;
        }
    }
    Ok(FeatureMatrix {
        days: a.days.clone(),
        names: (0..k - 1).map(share_name).collect(),
        values,
        kind: FeatureKind::Aggregate,
    })
}

/// Per-household one-hot blocks of width K-1, concatenated in household order.
pub fn disaggregate_features(a: &PatternAssignment, k: usize) -> Result<FeatureMatrix> {
    check_k(a, k)?;
    let (h, d) = (a.n_households(), a.n_days());
    let w = k - 1;
    let mut values = DMatrix::zeros(d, w * h);
    for hh in 0..h {
        for day in 0..d {
            let p = a.pattern(hh, day);
            if p < w {
                values[(day, hh * w + p)] = 1.0;
            }
        }
    }
    let names = a
        .households
        .iter()
        .flat_map(|id| (0..w).map(move |p| household_feature_name(id, p)))
        .collect();
    Ok(FeatureMatrix {
        days: a.days.clone(),
        names,
        values,
        kind: FeatureKind::Disaggregate,
    })
}

/// Range `[t_plus, t_minus]` of historical CSTs (hours).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoricalWindow {
    pub t_plus: f64,
    pub t_minus: f64,
}

impl HistoricalWindow {
    pub fn clip(&self, t: Option<f64>) -> f64 {
        match t {
            Some(t) => t.clamp(self.t_plus, self.t_minus),
            // No predicted congestion counts as infinitely late.
            None => self.t_minus,
        }
    }
}

pub fn historical_window<'a>(
    records: impl IntoIterator<Item = &'a CongestionRecord>,
) -> Result<HistoricalWindow> {
    let csts: Vec<f64> = records.into_iter().filter_map(|r| r.cst).collect();
    if csts.is_empty() {
        return Err(Error::NoObservations(
            "no congestion starting times in training records".into(),
        ));
    }
    Ok(HistoricalWindow {
        t_plus: csts.iter().copied().fold(f64::INFINITY, f64::min),
        t_minus: csts.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    })
}

/// Aggregate features plus the ARMA-predicted CST clipped to `window`.
pub fn mixed_features(
    agg: &FeatureMatrix,
    arma_cst: &[Option<f64>],
    window: &HistoricalWindow,
) -> Result<FeatureMatrix> {
    if agg.kind != FeatureKind::Aggregate {
        return Err(Error::Contract(
            "mixed features extend aggregate features".into(),
        ));
    }
    if arma_cst.len() != agg.n_rows() {
        return Err(Error::LengthMismatch {
            expected: agg.n_rows(),
            actual: arma_cst.len(),
        });
    }
    let column: Vec<f64> = arma_cst.iter().map(|&t| window.clip(t)).collect();
    Ok(agg.with_column("arma_cst", &column, FeatureKind::Mixed))
}

/// Aggregate features plus a column of predicted CSTs.
pub fn append_cst_feature(
    agg: &FeatureMatrix,
    predicted_cst: &[Option<f64>],
) -> Result<FeatureMatrix> {
    if agg.kind != FeatureKind::Aggregate {
        return Err(Error::Contract(
            "the CST column extends aggregate features".into(),
        ));
    }
    if predicted_cst.len() != agg.n_rows() {
        return Err(Error::LengthMismatch {
            expected: agg.n_rows(),
            actual: predicted_cst.len(),
        });
    }
    let column = predicted_cst
        .iter()
        .zip(&agg.days)
        .map(|(p, d)| p.ok_or_else(|| Error::Contract(format!("no predicted CST for {d}"))))
        .collect::<Result<Vec<f64>>>()?;
    Ok(agg.with_column("predicted_cst", &column, FeatureKind::AggregateCst))
}

/// Rows of `features` for the congested days of one segment, with the target
/// values. Days without congestion are dropped.
pub fn align_targets(
    features: &FeatureMatrix,
    records: &[CongestionRecord],
    target: Target,
) -> Result<(FeatureMatrix, Vec<f64>, Vec<CongestionRecord>)> {
    let mut rows = Vec::new();
    let mut y = Vec::new();
    let mut kept = Vec::new();
    for (i, day) in features.days.iter().enumerate() {
        let Some(rec) = records.iter().find(|r| r.day == *day) else {
            continue;
        };
        if let Some(v) = target.of(rec) {
            rows.push(i);
            y.push(v);
            kept.push(rec.clone());
        }
    }
    if rows.is_empty() {
        return Err(Error::NoObservations(
            "no congested days align with the feature days".into(),
        ));
    }
    Ok((features.select_rows(&rows), y, kept))
}

pub fn write_features<W: Write>(m: &FeatureMatrix, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(std::iter::once("day").chain(m.names.iter().map(String::as_str)))?;
    for (r, day) in m.days.iter().enumerate() {
        let row = std::iter::once(day.to_string())
            .chain((0..m.n_features()).map(|c| m.values[(r, c)].to_string()));
        w.write_record(row)?;
    }
    w.flush().map_err(|e| Error::io("<feature writer>", e))?;
    Ok(())
}

pub fn write_features_csv(m: &FeatureMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_features(m, std::io::BufWriter::new(file))
}

pub fn read_features<R: Read>(reader: R, kind: FeatureKind) -> Result<FeatureMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.get(0) != Some("day") {
        return Err(Error::parse(
            1,
            "feature CSV must start with a `day` column",
        ));
    }
    let names: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let mut days = Vec::new();
    let mut data = Vec::new();
    let mut record = csv::StringRecord::new();
    while rdr.read_record(&mut record)? {
        let line = record.position().map_or(0, |p| p.line());
        days.push(
            record[0]
                .parse()
                .map_err(|_| Error::parse(line, format!("invalid day {:?}", &record[0])))?,
        );
        for field in record.iter().skip(1) {
            data.push(
                field
                    .parse::<f64>()
                    .map_err(|_| Error::parse(line, format!("invalid feature value {field:?}")))?,
            );
        }
    }
    let values = DMatrix::from_row_slice(days.len(), names.len(), &data);
    Ok(FeatureMatrix {
        days,
        names,
        values,
        kind,
    })
}

pub fn read_features_csv(path: impl AsRef<Path>, kind: FeatureKind) -> Result<FeatureMatrix> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_features(file, kind)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn assignment(rows: &[&[usize]]) -> PatternAssignment {
        // rows[h][d]
        let d = rows[0].len();
        let start: NaiveDate = "2014-06-03".parse().unwrap();
        PatternAssignment {
            households: (0..rows.len()).map(|h| format!("h{}", h + 1)).collect(),
            days: start.iter_days().take(d).collect(),
            labels: rows.iter().flat_map(|r| r.iter().copied()).collect(),
        }
    }

    #[test]
    fn aggregate_shares() {
        // H=4, K=3, patterns [1,1,2,3] (zero-based [0,0,1,2]).
        let a = assignment(&[&[0], &[0], &[1], &[2]]);
        let f = aggregate_features(&a, 3).unwrap();
        assert_eq!(f.names, vec!["pattern_1_share", "pattern_2_share"]);
        assert_eq!(
            f.values.row(0).iter().copied().collect::<Vec<_>>(),
            vec![0.5, 0.25]
        );
        let all_last = aggregate_features(&assignment(&[&[2], &[2]]), 3).unwrap();
        assert_eq!(
            all_last.values.row(0).iter().copied().collect::<Vec<_>>(),
            vec![0.0, 0.0]
        );
        let all_first = aggregate_features(&assignment(&[&[0], &[0]]), 4).unwrap();
        assert_eq!(
            all_first.values.row(0).iter().copied().collect::<Vec<_>>(),
            vec![1.0, 0.0, 0.0]
        );
    }

    #[test]
    fn disaggregate_one_hot() {
        let a = assignment(&[&[1], &[2]]);
        let f = disaggregate_features(&a, 3).unwrap();
        assert_eq!(
            f.values.row(0).iter().copied().collect::<Vec<_>>(),
            vec![0.0, 1.0, 0.0, 0.0]
        );
        assert_eq!(f.names[1], "hh_h1_pattern_2");
        let k2 = disaggregate_features(&assignment(&[&[0], &[1]]), 2).unwrap();
        assert_eq!(k2.n_features(), 2);
        let first = disaggregate_features(&assignment(&[&[0]]), 4).unwrap();
        assert_eq!(
            first.values.row(0).iter().copied().collect::<Vec<_>>(),
            vec![1.0, 0.0, 0.0]
        );
    }

    #[test]
    fn feature_names_parse_back() {
        assert_eq!(
            parse_household_feature("hh_a_pattern_b_pattern_3"),
            Some(("a_pattern_b", 2))
        );
        assert_eq!(parse_household_feature("pattern_3_share"), None);
    }

    fn rec(day: &str, cst: Option<f64>) -> CongestionRecord {
        CongestionRecord {
            segment_id: "s".into(),
            day: day.parse().unwrap(),
            cst,
            duration: cst.map(|_| 1.0),
            fftt: 60.0,
        }
    }

    #[test]
    fn window_and_clipping() {
        let recs = [
            rec("2014-06-03", Some(6.2)),
            rec("2014-06-04", Some(6.5)),
            rec("2014-06-05", Some(7.9)),
            rec("2014-06-06", None),
        ];
        let w = historical_window(&recs).unwrap();
        assert_eq!((w.t_plus, w.t_minus), (6.2, 7.9));
        let single = historical_window(&recs[1..2]).unwrap();
        assert_eq!((single.t_plus, single.t_minus), (6.5, 6.5));
        assert!(historical_window(&recs[3..]).is_err());

        let agg = aggregate_features(&assignment(&[&[0, 1, 2], &[1, 1, 0]]), 3).unwrap();
        let m = mixed_features(&agg, &[Some(6.8), Some(5.0), None], &w).unwrap();
        assert_eq!(m.kind, FeatureKind::Mixed);
        assert_eq!(m.names.last().unwrap(), "arma_cst");
        let col: Vec<f64> = m.values.column(2).iter().copied().collect();
        assert_eq!(col, vec![6.8, 6.2, 7.9]);
        assert!(mixed_features(&m, &[None, None, None], &w).is_err());
    }

    #[test]
    fn cst_column() {
        let agg = aggregate_features(&assignment(&[&[0, 1, 2]]), 3).unwrap();
        let f = append_cst_feature(&agg, &[Some(6.5), Some(6.7), Some(6.4)]).unwrap();
        assert_eq!(f.n_features(), agg.n_features() + 1);
        assert_eq!(f.kind, FeatureKind::AggregateCst);
        assert!(append_cst_feature(&agg, &[Some(6.5), None, Some(6.4)]).is_err());
        let constant = append_cst_feature(&agg, &[Some(7.0); 3]).unwrap();
        assert!(constant.values.column(2).iter().all(|&v| v == 7.0));
    }

    #[test]
    fn alignment_drops_uncongested_days() {
        let agg = aggregate_features(&assignment(&[&[0, 1, 2]]), 3).unwrap();
        let recs = [
            rec("2014-06-03", Some(6.5)),
            rec("2014-06-04", None),
            rec("2014-06-05", Some(7.0)),
        ];
        let (x, y, kept) = align_targets(&agg, &recs, Target::Cst).unwrap();
        assert_eq!(x.n_rows(), 2);
        assert_eq!(y, vec![6.5, 7.0]);
        assert_eq!(kept.len(), 2);
        assert_eq!(x.days, vec![recs[0].day, recs[2].day]);
    }

    #[test]
    fn csv_round_trip() {
        let f = disaggregate_features(&assignment(&[&[0, 1], &[2, 1]]), 3).unwrap();
        let mut buf = Vec::new();
        write_features(&f, &mut buf).unwrap();
        assert_eq!(
            read_features(buf.as_slice(), FeatureKind::Disaggregate).unwrap(),
            f
        );
    }

    proptest! {
        #[test]
        fn aggregate_is_scaled_block_sum_of_disaggregate(
            h in 1usize..12, d in 1usize..6, k in 2usize..7, seed in any::<u64>()
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let start: NaiveDate = "2014-06-03".parse().unwrap();
            let a = PatternAssignment {
                households: (0..h).map(|i| i.to_string()).collect(),
                days: start.iter_days().take(d).collect(),
                labels: (0..h * d).map(|_| rng.random_range(0..k)).collect(),
            };
            let agg = aggregate_features(&a, k).unwrap();
            let dis = disaggregate_features(&a, k).unwrap();
            for day in 0..d {
                let mut row_sum = 0.0;
                for p in 0..k - 1 {
                    let block: f64 = (0..h).map(|hh| dis.values[(day, hh * (k - 1) + p)]).sum();
                    prop_assert_eq!(agg.values[(day, p)], block / h as f64);
                    row_sum += block;
                }
                let not_last = (0..h).filter(|&hh| a.pattern(hh, day) != k - 1).count();
                prop_assert_eq!(row_sum, not_last as f64);
                let shares: f64 = agg.values.row(day).iter().sum();
                prop_assert!((0.0..=1.0 + 1e-12).contains(&shares));
            }
        }
    }
}
