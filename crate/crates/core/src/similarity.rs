//! Agreement between the households and patterns that LASSO selects for
//! different road segments.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{parse_household_feature, FeatureKind};
use crate::regression::FittedPredictor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionProfile {
    pub segment_id: String,
    /// Households with at least one coefficient above the threshold.
    pub selected_households: BTreeSet<String>,
    /// Selected (household, pattern) features per pattern, indexed from zero.
    pub pattern_counts: Vec<usize>,
}

/// Reads the selected households and per-pattern counts off a model fitted
/// on disaggregate features with `k` patterns.
pub fn selection_profile(
    segment_id: &str,
    model: &FittedPredictor,
    k: usize,
    threshold: f64,
) -> Result<SelectionProfile> {
    if model.feature_kind != FeatureKind::Disaggregate {
        return Err(Error::Contract(format!(
            "selection profiles need disaggregate features, got {}",
            model.feature_kind.name()
        )));
    }
    let mut selected_households = BTreeSet::new();
    let mut pattern_counts = vec![0; k];
    for (name, beta) in model.names.iter().zip(&model.fit.coefficients) {
        let (household, pattern) = parse_household_feature(name)
            .ok_or_else(|| Error::Contract(format!("unexpected feature name {name}")))?;
        if pattern >= k {
            return Err(Error::Contract(format!("feature {name} exceeds K = {k}")));
        }
        if beta.abs() > threshold {
            selected_households.insert(household.to_string());
            pattern_counts[pattern] += 1;
        }
    }
    Ok(SelectionProfile {
        segment_id: segment_id.to_string(),
        selected_households,
        pattern_counts,
    })
}

/// `|A ∩ B| / |A ∪ B|`, taken as 1 when both sets are empty.
pub fn jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    let intersection = a.intersection(b).count();
    let union = a.len() + b.len() - intersection;
    if union == 0 {
        1.0
    } else {
        intersection as f64 / union as f64
    }
}

/// Cosine of the angle between `u` and `v`, taken as 0 when either is zero.
pub fn cosine(u: &[f64], v: &[f64]) -> f64 {
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        0.0
    } else {
        (dot / (nu * nv)).clamp(-1.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrices {
    pub segment_ids: Vec<String>,
    pub jaccard: Vec<Vec<f64>>,
    pub cosine: Vec<Vec<f64>>,
}

pub fn pairwise_similarity(profiles: &[SelectionProfile]) -> Result<SimilarityMatrices> {
    if profiles.len() < 2 {
        return Err(Error::Config(format!(
            "similarity needs at least 2 segments, got {}",
            profiles.len()
        )));
    }
    let n = profiles.len();
    let counts: Vec<Vec<f64>> = profiles
        .iter()
        .map(|p| p.pattern_counts.iter().map(|&c| c as f64).collect())
        .collect();
    let mut jac = vec![vec![0.0; n]; n];
    let mut cos = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let a = jaccard(
                &profiles[i].selected_households,
                &profiles[j].selected_households,
            );
            let c = cosine(&counts[i], &counts[j]);
            jac[i][j] = a;
            jac[j][i] = a;
            cos[i][j] = c;
            cos[j][i] = c;
        }
    }
    Ok(SimilarityMatrices {
        segment_ids: profiles.iter().map(|p| p.segment_id.clone()).collect(),
        jaccard: jac,
        cosine: cos,
    })
}

/// Square matrix with segment ids as the header row and first column.
pub fn write_matrix<W: Write>(ids: &[String], matrix: &[Vec<f64>], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["segment_id".to_string()];
    header.extend(ids.iter().cloned());
    w.write_record(&header)?;
    for (id, row) in ids.iter().zip(matrix) {
        let mut record = vec![id.clone()];
        record.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&record)?;
    }
    w.flush().map_err(|e| Error::io("<similarity matrix>", e))?;
    Ok(())
}

pub fn write_matrix_csv(ids: &[String], matrix: &[Vec<f64>], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_matrix(ids, matrix, std::io::BufWriter::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::household_feature_name;
    use crate::regression::{LinearFit, Standardization, Target};
    use proptest::prelude::*;

    fn set(xs: &[u32]) -> BTreeSet<u32> {
        xs.iter().copied().collect()
    }

    fn model(households: &[&str], k: usize, nonzero: &[(usize, f64)]) -> FittedPredictor {
        let names: Vec<String> = households
            .iter()
            .flat_map(|h| (0..k - 1).map(move |p| household_feature_name(h, p)))
            .collect();
        let mut coefficients = vec![0.0; names.len()];
        for &(i, b) in nonzero {
            coefficients[i] = b;
        }
        let p = names.len();
        FittedPredictor {
            target: Target::Cst,
            feature_kind: FeatureKind::Disaggregate,
            names,
            fit: LinearFit {
                coefficients,
                intercept: 7.0,
                alpha: 0.1,
                standardization: Standardization {
                    means: vec![0.0; p],
                    scales: vec![1.0; p],
                },
                converged: true,
                passes: 1,
                objective_trace: vec![],
                warnings: vec![],
            },
        }
    }

    #[test]
    fn jaccard_examples() {
        assert!((jaccard(&set(&[1, 2]), &set(&[2, 3])) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(jaccard(&set(&[4, 5]), &set(&[4, 5])), 1.0);
        assert_eq!(jaccard(&set(&[1]), &set(&[2])), 0.0);
        assert_eq!(jaccard(&set(&[]), &set(&[])), 1.0);
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]), 0.0);
        assert!((cosine(&[2.0, 4.0], &[1.0, 2.0]) - 1.0).abs() < 1e-15);
        assert!((cosine(&[1.0, 1.0, 0.0], &[1.0, 0.0, 1.0]) - 0.5).abs() < 1e-15);
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 2.0]), 0.0);
    }

    #[test]
    fn selection_profile_examples() {
        let none = selection_profile("s", &model(&["h1", "h7"], 4, &[]), 4, 0.0).unwrap();
        assert!(none.selected_households.is_empty());
        assert_eq!(none.pattern_counts, vec![0; 4]);

        // h7's block starts at index 3; its pattern-3 slot is index 5.
        let one = selection_profile("s", &model(&["h1", "h7"], 4, &[(5, 0.2)]), 4, 0.0).unwrap();
        assert_eq!(one.selected_households, ["h7".to_string()].into());
        assert_eq!(one.pattern_counts, vec![0, 0, 1, 0]);

        let two = selection_profile(
            "s",
            &model(&["h1", "h7"], 4, &[(0, 0.2), (3, -0.1)]),
            4,
            0.0,
        )
        .unwrap();
        assert_eq!(two.selected_households.len(), 2);
        assert_eq!(two.pattern_counts, vec![2, 0, 0, 0]);

        let dust = selection_profile("s", &model(&["h1"], 3, &[(0, 1e-12)]), 3, 1e-9).unwrap();
        assert!(dust.selected_households.is_empty());
    }

    #[test]
    fn selection_profile_requires_disaggregate_model() {
        let mut m = model(&["h1"], 3, &[]);
        m.feature_kind = FeatureKind::Aggregate;
        assert!(selection_profile("s", &m, 3, 0.0).is_err());
    }

    #[test]
    fn pairwise_examples() {
        let p = |id: &str, hs: &[&str], counts: Vec<usize>| SelectionProfile {
            segment_id: id.into(),
            selected_households: hs.iter().map(|h| h.to_string()).collect(),
            pattern_counts: counts,
        };
        let same =
            pairwise_similarity(&[p("a", &["x"], vec![1, 2]), p("b", &["x"], vec![1, 2])]).unwrap();
        assert!(same.jaccard.iter().flatten().all(|v| *v == 1.0));
        assert!(same
            .cosine
            .iter()
            .flatten()
            .all(|v| (*v - 1.0).abs() < 1e-15));
        let apart =
            pairwise_similarity(&[p("a", &["x"], vec![1, 0]), p("b", &["y"], vec![0, 3])]).unwrap();
        assert_eq!(apart.jaccard[0][1], 0.0);
        assert_eq!(apart.cosine[1][0], 0.0);
        assert!(pairwise_similarity(&[p("a", &[], vec![])]).is_err());
    }

    #[test]
    fn matrix_csv_layout() {
        let mut buf = Vec::new();
        let ids = vec!["a".to_string(), "b".to_string()];
        write_matrix(&ids, &[vec![1.0, 0.5], vec![0.5, 1.0]], &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "segment_id,a,b\na,1,0.5\nb,0.5,1\n"
        );
    }

    proptest! {
        #[test]
        fn cosine_is_scale_invariant(
            u in prop::collection::vec(0.0f64..10.0, 4),
            v in prop::collection::vec(0.0f64..10.0, 4),
            scale in 0.01f64..100.0,
        ) {
            let scaled: Vec<f64> = u.iter().map(|x| x * scale).collect();
            prop_assert!((cosine(&scaled, &v) - cosine(&u, &v)).abs() < 1e-12);
            let c = cosine(&u, &v);
            prop_assert!((0.0..=1.0).contains(&c));
        }

        #[test]
        fn jaccard_is_symmetric_and_bounded(
            a in prop::collection::btree_set(0u32..20, 0..10),
            b in prop::collection::btree_set(0u32..20, 0..10),
        ) {
            let j = jaccard(&a, &b);
            prop_assert_eq!(j, jaccard(&b, &a));
            prop_assert!((0.0..=1.0).contains(&j));
            if !a.is_empty() {
                prop_assert_eq!(jaccard(&a, &a), 1.0);
            }
        }
    }
}
