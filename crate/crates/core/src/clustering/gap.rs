//! Gap statistic for choosing the number of clusters, with a uniform
//! bounding-box reference distribution.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kmeans::{check_points, count_distinct, kmeans_unchecked, KMeansParams};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapEntry {
    pub k: usize,
    pub gap: f64,
    /// `sd_k * sqrt(1 + 1/B)`.
    pub s_k: f64,
    pub log_inertia: f64,
    pub expected_log_inertia: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapCurve {
    pub entries: Vec<GapEntry>,
    pub b: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapSelection {
    pub curve: GapCurve,
    pub chosen_k: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapParams {
    pub b: usize,
    pub restarts: usize,
    pub max_iters: usize,
    pub tol: f64,
    pub seed: u64,
}

impl GapParams {
    pub fn new(b: usize, seed: u64) -> Self {
        GapParams {
            b,
            restarts: 10,
            max_iters: 300,
            tol: 1e-6,
            seed,
        }
    }
}

fn log_w(inertia: f64) -> f64 {
    inertia.max(f64::MIN_POSITIVE).ln()
}

/// Evaluates the gap statistic at each candidate K and picks the smallest K
/// with `Gap(K) >= Gap(K+1) - s(K+1)` (K+1 being the next candidate).
pub fn gap_select_k(
    points: &[Vec<f64>],
    k_candidates: &[usize],
    params: &GapParams,
) -> Result<GapSelection> {
    if k_candidates.is_empty() {
        return Err(Error::Config("no candidate K values".into()));
    }
    if params.b < 2 {
        return Err(Error::Config(format!(
            "gap statistic needs B >= 2 reference sets, got {}",
            params.b
        )));
    }
    if k_candidates.windows(2).any(|w| w[0] >= w[1]) || k_candidates[0] == 0 {
        return Err(Error::Config(
            "candidate K values must be positive and strictly increasing".into(),
        ));
    }
    let dim = check_points(points)?;
    let distinct = count_distinct(points);
    let k_max = *k_candidates.last().unwrap();
    if k_max > distinct {
        return Err(Error::Infeasible(format!(
            "cannot form {k_max} clusters from {distinct} distinct points"
        )));
    }

    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for p in points {
        for j in 0..dim {
            lo[j] = lo[j].min(p[j]);
            hi[j] = hi[j].max(p[j]);
        }
    }

    let km = |k: usize, task: u64| KMeansParams {
        k,
        restarts: params.restarts,
        max_iters: params.max_iters,
        tol: params.tol,
        seed: params.seed ^ task.wrapping_mul(0x9E37_79B9_7F4A_7C15),
    };

    // Reference sets are shared across K; replicate b uses RNG stream b.
    let references: Vec<Vec<Vec<f64>>> = (0..params.b)
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
            rng.set_stream(b as u64 + 1);
            (0..points.len())
                .map(|_| {
                    (0..dim)
                        .map(|j| lo[j] + (hi[j] - lo[j]) * rng.random::<f64>())
                        .collect()
                })
                .collect()
        })
        .collect();

    let n_k = k_candidates.len();
    let tasks: Vec<(usize, Option<usize>)> = (0..n_k)
        .flat_map(|i| std::iter::once((i, None)).chain((0..params.b).map(move |b| (i, Some(b)))))
        .collect();
    let results: Vec<Result<f64>> = tasks
        .par_iter()
        .enumerate()
        .map(|(task, &(i, b))| {
            let data = match b {
                None => points,
                Some(b) => references[b].as_slice(),
            };
            kmeans_unchecked(data, &km(k_candidates[i], task as u64)).map(|f| log_w(f.inertia))
        })
        .collect();

    let mut entries = Vec::with_capacity(n_k);
    let mut it = results.into_iter();
    for &k in k_candidates {
        let observed = it.next().unwrap()?;
        let refs = (0..params.b)
            .map(|_| it.next().unwrap())
            .collect::<Result<Vec<f64>>>()?;
        let mean = refs.iter().sum::<f64>() / params.b as f64;
        let sd = (refs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / params.b as f64).sqrt();
        entries.push(GapEntry {
            k,
            gap: mean - observed,
            s_k: sd * (1.0 + 1.0 / params.b as f64).sqrt(),
            log_inertia: observed,
            expected_log_inertia: mean,
        });
    }

    let mut warnings = Vec::new();
    let chosen = entries
        .windows(2)
        .find(|w| w[0].gap >= w[1].gap - w[1].s_k)
        .map(|w| w[0].k);
    let chosen_k = match chosen {
        Some(k) => k,
        None => {
            warnings.push(format!(
                "gap criterion never satisfied over candidates {k_candidates:?}; using largest K = {k_max}"
            ));
            k_max
        }
    };
    Ok(GapSelection {
        curve: GapCurve {
            entries,
            b: params.b,
        },
        chosen_k,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    pub(crate) fn blobs(seed: u64, centers: &[[f64; 2]], per: usize, sd: f64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, sd).unwrap();
        centers
            .iter()
            .flat_map(|c| std::iter::repeat_n(c, per))
            .map(|c| c.iter().map(|v| v + noise.sample(&mut rng)).collect())
            .collect()
    }

    #[test]
    fn three_blobs_give_three() {
        let pts = blobs(1, &[[0.0, 0.0], [1.0, 0.0], [0.5, 0.866]], 40, 0.05);
        let sel = gap_select_k(&pts, &[1, 2, 3, 4, 5, 6], &GapParams::new(20, 1)).unwrap();
        assert_eq!(sel.chosen_k, 3);
        assert!(sel.warnings.is_empty());
        assert_eq!(sel.curve.entries.len(), 6);
    }

    #[test]
    fn single_blob_gives_one() {
        let pts = blobs(2, &[[0.0, 0.0]], 120, 0.05);
        let sel = gap_select_k(&pts, &[1, 2, 3, 4], &GapParams::new(20, 2)).unwrap();
        assert_eq!(sel.chosen_k, 1);
    }

    #[test]
    fn singleton_candidate_warns() {
        let pts = blobs(3, &[[0.0, 0.0], [3.0, 3.0]], 20, 0.3);
        let sel = gap_select_k(&pts, &[10], &GapParams::new(5, 3)).unwrap();
        assert_eq!(sel.chosen_k, 10);
        assert_eq!(sel.warnings.len(), 1);
    }

    #[test]
    fn configuration_errors() {
        let pts = blobs(4, &[[0.0, 0.0]], 10, 1.0);
        assert!(matches!(
            gap_select_k(&pts, &[1, 2], &GapParams::new(1, 0)),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            gap_select_k(&pts, &[], &GapParams::new(5, 0)),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            gap_select_k(&pts, &[2, 1], &GapParams::new(5, 0)),
            Err(Error::Config(_))
        ));
    }
}
